#include <gtest/gtest.h>

#include <random>

#include "lpdiag/diagnose.hpp"
#include "reference.hpp"
#include "support.hpp"

namespace lpdiag {
namespace {

using testing::atom;
using namespace testing::reference;
using Kind = DiagnosisError::Kind;

Oracle spec_oracle() { return Oracle::from_spec(testing::isort_spec()); }

const WrongAnswer kSymptom{atom("isort([2,1,3],L)"), atom("isort([2,1,3],[2,3,1])")};

std::string verdict_key(const Verdict& v) {
  if (const auto* ic = v.incorrect_clause()) return ic->clause.to_string() + " " + instance_text(ic->head, ic->body);
  const auto* ua = v.uncovered_atom();
  return "uncovered " + variant_key(ua->atom.term());
}

// Incorrect clause instance judged by the reference semantics: the head is
// outside the intended model, every body atom inside it.
bool valid_by_reference(const Verdict& v) {
  const auto* ic = v.incorrect_clause();
  if (!ic || !ic->head.ground() || ref_correct(ic->head)) return false;
  for (const auto& b : ic->body) {
    if (!b.ground()) return false;
    if (b.builtin() ? !builtin_holds(b) : !ref_correct(b)) return false;
  }
  return true;
}

Kind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const DiagnosisError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no diagnosis error";
  return Kind::kIllegalAction;
}

// ---------------------------------------------------------------------------
// Wrong answers

TEST(WrongAnswer, SuccessTraceDescent) {
  Oracle o = spec_oracle();
  Verdict v = diagnose_wrong_alg4(testing::inc_program(), kSymptom, o);
  ASSERT_NE(v.incorrect_clause(), nullptr);
  EXPECT_EQ(v.incorrect_clause()->clause.to_string(), "insert/3 clause 3");
  EXPECT_EQ(instance_text(v.incorrect_clause()->head, v.incorrect_clause()->body),
            "insert(1,[3],[3,1]) :- 3>1, insert(1,[],[1]).");
  EXPECT_TRUE(valid_by_reference(v));
  EXPECT_EQ(o.questions_asked(), 5u);
  EXPECT_EQ(v.events_examined, 44u);
  std::vector<std::string> tail(v.transcript.end() - 3, v.transcript.end());
  EXPECT_EQ(tail, (std::vector<std::string>{
                      "verdict: incorrect clause instance",
                      "  clause: insert/3 clause 3 (line 7): insert(X,[Y|Ys],[Y|Zs]) :- Y>X, insert(X,Ys,Zs).",
                      "  instance: insert(1,[3],[3,1]) :- 3>1, insert(1,[],[1]).",
                  }));
  EXPECT_EQ(v.transcript.front(), "symptom: isort([2,1,3],[2,3,1]) is an answer to isort([2,1,3],L)");
}

TEST(WrongAnswer, EagerDescent) {
  Oracle o = spec_oracle();
  Verdict v = diagnose_wrong_alg5(testing::inc_program(), kSymptom, o);
  EXPECT_TRUE(valid_by_reference(v));
  EXPECT_EQ(o.questions_asked(), 7u);
  EXPECT_EQ(v.events_examined, 40u);
}

TEST(WrongAnswer, EagerDescentFromTheAnswer) {
  Oracle o = spec_oracle();
  Verdict v = diagnose_wrong_alg5(testing::inc_program(), kSymptom, o, {}, /*start_from_answer=*/true);
  EXPECT_TRUE(valid_by_reference(v));
  EXPECT_EQ(v.transcript[2], "tracing isort([2,1,3],[2,3,1]) towards isort([2,1,3],[2,3,1])");
}

TEST(WrongAnswer, StrategiesAgree) {
  Oracle a = spec_oracle(), b = spec_oracle(), c = spec_oracle(), d = spec_oracle();
  const Program& p = testing::inc_program();
  std::string k4 = verdict_key(diagnose_wrong_alg4(p, kSymptom, a));
  EXPECT_EQ(verdict_key(diagnose_wrong_alg5(p, kSymptom, b)), k4);
  EXPECT_EQ(verdict_key(diagnose_wrong_alg5(p, kSymptom, c, {}, true)), k4);
  EXPECT_EQ(verdict_key(diagnose_wrong_tree(p, kSymptom, d)), k4);
}

TEST(WrongAnswer, EagerDescentExaminesNoMoreEvents) {
  // Judging answers as they appear leaves the run earlier, though on this
  // program it costs two more questions.
  Oracle a = spec_oracle(), b = spec_oracle();
  Verdict v4 = diagnose_wrong_alg4(testing::inc_program(), kSymptom, a);
  Verdict v5 = diagnose_wrong_alg5(testing::inc_program(), kSymptom, b);
  EXPECT_LE(v5.events_examined, v4.events_examined);
  EXPECT_EQ(a.questions_asked(), 5u);
  EXPECT_EQ(b.questions_asked(), 7u);
}

TEST(WrongAnswer, RandomSymptomsAreLocatedByEveryStrategy) {
  std::mt19937_64 rng(99);
  const Program& p = testing::inc_program();
  int symptoms = 0;
  for (int round = 0; round < 40; ++round) {
    std::vector<Term> items;
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    for (std::size_t i = 0; i < n; ++i) items.push_back(Term::integer(std::uniform_int_distribution<int>(-5, 5)(rng)));
    Atom query("isort", {Term::list(items), Term::variable(1, "S")});
    for (const auto& ans : solve(p, query).answers) {
      if (ref_correct(ans.atom)) continue;
      ++symptoms;
      WrongAnswer w{query, ans.atom};
      Oracle o4 = spec_oracle(), o5 = spec_oracle(), ot = spec_oracle();
      Verdict v4 = diagnose_wrong_alg4(p, w, o4);
      Verdict v5 = diagnose_wrong_alg5(p, w, o5);
      Verdict vt = diagnose_wrong_tree(p, w, ot);
      EXPECT_TRUE(valid_by_reference(v4)) << to_string(ans.atom);
      EXPECT_TRUE(valid_by_reference(v5)) << to_string(ans.atom);
      EXPECT_TRUE(valid_by_reference(vt)) << to_string(ans.atom);
      EXPECT_EQ(v4.incorrect_clause()->clause.to_string(), "insert/3 clause 3");
      EXPECT_TRUE(check_verdict(p, v4, o4).valid);
    }
  }
  EXPECT_GT(symptoms, 20);
}

TEST(WrongAnswer, CorrectAnswerIsNotASymptom) {
  const Program& p = testing::inc_program();
  WrongAnswer w{atom("isort([1,3],L)"), atom("isort([1,3],[1,3])")};
  Oracle o = spec_oracle();
  EXPECT_EQ(error_kind([&] { diagnose_wrong_alg4(p, w, o); }), Kind::kNotASymptom);
  EXPECT_EQ(error_kind([&] { diagnose_wrong_alg5(p, w, o); }), Kind::kNotASymptom);
  EXPECT_EQ(error_kind([&] { diagnose_wrong_tree(p, w, o); }), Kind::kNotASymptom);
}

TEST(WrongAnswer, NonAnswerIsUnreproducible) {
  Oracle o = spec_oracle();
  WrongAnswer w{atom("isort([2,1,3],L)"), atom("isort([2,1,3],[3,2,1])")};
  EXPECT_EQ(error_kind([&] { diagnose_wrong_alg4(testing::inc_program(), w, o); }), Kind::kUnreproducible);
}

// Spec answers except for a deferred insert(1,[],[1]).
Oracle deferring_oracle() {
  auto spec = std::make_shared<SpecBackend>(testing::isort_spec());
  return Oracle(std::make_unique<CallbackBackend>([spec](const OracleQuestion& q) {
    if (to_string(q.atom) == "insert(1,[],[1])") return Judgement::kDeferred;
    return spec->answer(q);
  }));
}

TEST(WrongAnswer, DeferredAnswersLeaveTheDiagnosisOpen) {
  const Program& p = testing::inc_program();
  Oracle a = deferring_oracle(), b = deferring_oracle(), c = deferring_oracle();
  EXPECT_EQ(error_kind([&] { diagnose_wrong_alg4(p, kSymptom, a); }), Kind::kInconclusive);
  EXPECT_EQ(error_kind([&] { diagnose_wrong_alg5(p, kSymptom, b); }), Kind::kInconclusive);
  EXPECT_EQ(error_kind([&] { diagnose_wrong_tree(p, kSymptom, c); }), Kind::kInconclusive);
}

TEST(WrongAnswer, ProgressSurvivesAnInterruptedRun) {
  Oracle o(std::make_unique<ReplayBackend>(std::vector<Judgement>{Judgement::kNo}));
  std::vector<std::string> progress;
  EXPECT_THROW(diagnose_wrong_alg4(testing::inc_program(), kSymptom, o, {}, &progress), PendingQuestion);
  ASSERT_GE(progress.size(), 2u);
  EXPECT_EQ(progress[1], "is_correct(isort([2,1,3],[2,3,1]))? no");
}

TEST(WrongAnswer, ScriptedDialogue) {
  auto script = ScriptedBackend::parse(
      "correct | isort([2,1,3],[2,3,1]) | no\n"
      "correct | isort([1,3],[3,1]) | no\n"
      "correct | isort([3],[3]) | yes\n"
      "correct | insert(1,[3],[3,1]) | no\n"
      "correct | insert(1,[],[1]) | yes\n");
  Oracle o(std::make_unique<ScriptedBackend>(std::move(script)));
  Verdict v = diagnose_wrong_alg4(testing::inc_program(), kSymptom, o);
  EXPECT_TRUE(valid_by_reference(v));
}

TEST(WrongAnswer, ScriptOutOfStepIsReported) {
  Oracle o(std::make_unique<ScriptedBackend>(ScriptedBackend::parse(
      "correct | isort([2,1,3],[2,3,1]) | no\n"
      "correct | insert(2,[3,1],[2,3,1]) | yes\n")));
  EXPECT_THROW(diagnose_wrong_alg4(testing::inc_program(), kSymptom, o), OracleScriptError);
}

// ---------------------------------------------------------------------------
// Proof tree navigation

ProofTree symptom_tree() { return proof_tree(testing::inc_program(), kSymptom.query, kSymptom.answer); }

TEST(TreeSession, ManualNavigationFindsTheClause) {
  TreeSession s(testing::inc_program(), symptom_tree());
  EXPECT_EQ(s.moves(), std::vector<Move>{Move::kChild});
  s.move(Move::kChild);
  EXPECT_EQ(to_string(s.current().atom), "isort([1,3],[3,1])");
  s.judge(false);
  s.move(Move::kChild);
  s.judge(true);
  s.move(Move::kRight);
  EXPECT_EQ(to_string(s.current().atom), "insert(1,[3],[3,1])");
  s.judge(false);
  s.move(Move::kChild);
  EXPECT_TRUE(s.current().builtin);
  EXPECT_EQ(error_kind([&] { s.judge(true); }), Kind::kIllegalAction);
  s.move(Move::kRight);
  s.judge(true);
  EXPECT_EQ(error_kind([&] { s.move(Move::kRight); }), Kind::kIllegalAction);
  ASSERT_TRUE(s.error_node());
  EXPECT_EQ(*s.error_node(), (TreeSession::Path{0, 1}));
  const Verdict& v = s.show_error();
  EXPECT_TRUE(valid_by_reference(v));
  EXPECT_EQ(s.transcript()[0], "tree diagnosis of isort([2,1,3],[2,3,1])");
  EXPECT_EQ(s.transcript()[8], "v: 3>1 (built-in)");
  EXPECT_EQ(s.last_incorrect(), (TreeSession::Path{0, 1}));
}

TEST(TreeSession, JudgementsAreFinal) {
  TreeSession s(testing::inc_program(), symptom_tree());
  EXPECT_EQ(error_kind([&] { s.judge(true); }), Kind::kIllegalAction);  // the root is the symptom
  s.move(Move::kChild);
  s.judge(true);
  EXPECT_EQ(error_kind([&] { s.judge(false); }), Kind::kIllegalAction);
}

TEST(TreeSession, ShowErrorNeedsAnIncorrectNodeWithCorrectChildren) {
  TreeSession s(testing::inc_program(), symptom_tree());
  EXPECT_FALSE(s.error_node());
  EXPECT_EQ(error_kind([&] { s.show_error(); }), Kind::kIllegalAction);
  s.move(Move::kChild);
  s.judge(false);
  // isort([1,3],[3,1]) has unjudged children, and it rules out its parent.
  EXPECT_FALSE(s.error_node());
  s.move(Move::kChild);
  s.judge(true);
  s.move(Move::kRight);
  s.judge(true);  // a wrong judgement, but the session takes it
  s.move(Move::kParent);
  ASSERT_TRUE(s.error_node());
  EXPECT_EQ(*s.error_node(), (TreeSession::Path{0}));
  EXPECT_EQ(s.show_error().incorrect_clause()->clause.to_string(), "isort/2 clause 1");
  EXPECT_EQ(error_kind([&] { s.judge(true); }), Kind::kIllegalAction);
}

TEST(TreeSession, LeftAndParentMoves) {
  TreeSession s(testing::inc_program(), symptom_tree());
  EXPECT_FALSE(s.can_move(Move::kParent));
  EXPECT_FALSE(s.can_move(Move::kLeft));
  s.move(Move::kChild);
  s.move(Move::kRight);
  EXPECT_EQ(to_string(s.current().atom), "insert(2,[3,1],[2,3,1])");
  EXPECT_FALSE(s.can_move(Move::kChild) && s.current().children.empty());
  s.move(Move::kLeft);
  s.move(Move::kParent);
  EXPECT_TRUE(s.path().empty());
  EXPECT_EQ(parse_move("^"), Move::kParent);
  EXPECT_EQ(parse_move("v"), Move::kChild);
  EXPECT_EQ(parse_move("x"), std::nullopt);
  EXPECT_EQ(move_key(Move::kLeft), "<");
}

TEST(TreeSession, AutomaticNavigation) {
  Oracle o = spec_oracle();
  Verdict v = diagnose_wrong_tree(testing::inc_program(), symptom_tree(), o);
  EXPECT_TRUE(valid_by_reference(v));
  EXPECT_EQ(o.questions_asked(), 5u);
}

// ---------------------------------------------------------------------------
// Missing answers

TEST(MissingAnswer, LocatesTheUncoveredInsert) {
  Oracle o = spec_oracle();
  Verdict v = diagnose_missing(testing::ins_program(), {atom("isort([2,1],L)")}, o);
  const auto* ua = v.uncovered_atom();
  ASSERT_NE(ua, nullptr);
  EXPECT_EQ(variant_key(ua->atom.term()), variant_key(atom("insert(1,[],Z)").term()));
  EXPECT_EQ(ua->procedure, (PredicateKey{"insert", 3}));
  ASSERT_TRUE(ua->witness);
  EXPECT_EQ(to_string(*ua->witness), "insert(1,[],[1])");
  EXPECT_TRUE(ref_required(*ua->witness));
  EXPECT_EQ(o.questions_asked(), 3u);
  EXPECT_EQ(o.questions_asked(OracleQuestion::Kind::kIsAnswerSetComplete), 0u);
  EXPECT_EQ(v.transcript.front(), "symptom: isort([2,1],L) has no answers (finite failure)");
  EXPECT_EQ(v.transcript.back(), "  witness: insert(1,[],[1])");
  EXPECT_TRUE(check_verdict(testing::ins_program(), v, o, testing::isort_spec()).valid);
}

TEST(MissingAnswer, RandomFailuresEndAtAnEmptyListInsert) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 15; ++round) {
    std::vector<Term> items;
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    for (std::size_t i = 0; i < n; ++i) items.push_back(Term::integer(std::uniform_int_distribution<int>(-5, 5)(rng)));
    Atom query("isort", {Term::list(items), Term::variable(1, "S")});
    ASSERT_TRUE(solve(testing::ins_program(), query).answers.empty());
    Oracle o = spec_oracle();
    Verdict v = diagnose_missing(testing::ins_program(), {query}, o);
    const auto* ua = v.uncovered_atom();
    ASSERT_NE(ua, nullptr);
    EXPECT_EQ(ua->procedure, (PredicateKey{"insert", 3}));
    EXPECT_TRUE(ua->atom.arg(1).is_nil()) << to_string(ua->atom);
    ASSERT_TRUE(ua->witness);
    EXPECT_TRUE(ref_required(*ua->witness));
  }
}

TEST(MissingAnswer, IncompleteAnswerSetsUseCompletenessQuestions) {
  // One clause of insert is missing: answers exist but not all of them.
  Program p = parse_program(
      "pick(X, [X|_]).\n"
      "two(X) :- pick(X, [1,2]).\n");
  auto spec = std::make_shared<const Specification>(Specification::parse(
      ":- domain(0, 2, 2).\n"
      "'$spec$pick'(X, L) :- mem(X, L).\n"
      "'$spec$two'(X) :- mem(X, [1,2]).\n"
      "mem(X, [X|_]).\nmem(X, [_|T]) :- mem(X, T).\n"));
  Oracle o = Oracle::from_spec(spec);
  Verdict v = diagnose_missing(p, {atom("two(X)")}, o);
  ASSERT_NE(v.uncovered_atom(), nullptr);
  EXPECT_EQ(to_string(v.uncovered_atom()->atom), "pick(X,[1,2])");
  EXPECT_EQ(to_string(*v.uncovered_atom()->witness), "pick(2,[1,2])");
  EXPECT_EQ(o.questions_asked(OracleQuestion::Kind::kIsAnswerSetComplete), 2u);
}

TEST(MissingAnswer, UndefinedProcedure) {
  Program p = parse_program("q :- r.\n");
  auto spec = std::make_shared<const Specification>(Specification::parse("'$spec$q'.\n'$spec$r'.\n"));
  Oracle o = Oracle::from_spec(spec);
  Verdict v = diagnose_missing(p, {atom("q")}, o);
  ASSERT_NE(v.uncovered_atom(), nullptr);
  EXPECT_EQ(to_string(v.uncovered_atom()->atom), "r");
  EXPECT_EQ(to_string(*v.uncovered_atom()->witness), "r");
  EXPECT_TRUE(check_verdict(p, v, o, spec).valid);
  EXPECT_TRUE(check_verdict(p, v, o).valid);
}

TEST(MissingAnswer, UnsatisfiableQueryIsNotASymptom) {
  Oracle o = spec_oracle();
  EXPECT_EQ(error_kind([&] { diagnose_missing(testing::ins_program(), {atom("insert(1,[3,2],L)")}, o); }),
            Kind::kNotASymptom);
  Oracle c = spec_oracle();
  EXPECT_EQ(error_kind([&] { diagnose_missing(testing::inc_program(), {atom("isort([1],L)")}, c); }),
            Kind::kNotASymptom);
}

TEST(MissingAnswer, TruncatedSearchIsRefused) {
  Program p = parse_program("loop :- loop.\n");
  auto spec = std::make_shared<const Specification>(Specification::parse("'$spec$loop'.\n"));
  Oracle o = Oracle::from_spec(spec);
  EngineOptions opts;
  opts.bounds.max_depth = 50;
  EXPECT_EQ(error_kind([&] { diagnose_missing(p, {atom("loop")}, o, opts); }), Kind::kTruncated);
  EXPECT_EQ(o.questions_asked(), 0u);
}

TEST(MissingAnswer, DeferredSatisfiabilityIsInconclusive) {
  auto spec = std::make_shared<SpecBackend>(testing::isort_spec());
  Oracle o(std::make_unique<CallbackBackend>([spec](const OracleQuestion& q) {
    return q.atom.predicate() == "insert" ? Judgement::kDeferred : spec->answer(q);
  }));
  EXPECT_EQ(error_kind([&] { diagnose_missing(testing::ins_program(), {atom("isort([2,1],L)")}, o); }),
            Kind::kInconclusive);
}

// ---------------------------------------------------------------------------
// Verdict checks

TEST(CheckVerdict, RejectsWrongInstances) {
  const Program& p = testing::inc_program();
  Oracle o = spec_oracle();
  Verdict v;
  v.error = IncorrectClauseInstance{p.clause({"insert", 3}, 2)->origin, atom("insert(1,[3],[1,3])"), {atom("1=<3")}};
  EXPECT_FALSE(check_verdict(p, v, o).valid);  // the head is correct
  v.error = IncorrectClauseInstance{p.clause({"insert", 3}, 3)->origin, atom("insert(1,[3],[3,1])"),
                                    {atom("1>3"), atom("insert(1,[],[1])")}};
  EXPECT_FALSE(check_verdict(p, v, o).valid);  // not an instance
  v.error = IncorrectClauseInstance{p.clause({"isort", 2}, 1)->origin, atom("isort([2,1,3],[2,3,1])"),
                                    {atom("isort([1,3],[3,1])"), atom("insert(2,[3,1],[2,3,1])")}};
  EXPECT_FALSE(check_verdict(p, v, o).valid);  // an incorrect body atom
  v.error = IncorrectClauseInstance{p.clause({"insert", 3}, 3)->origin, atom("insert(1,[3],[3,1])"),
                                    {atom("3>1"), atom("insert(1,[],[1])")}};
  EXPECT_TRUE(check_verdict(p, v, o).valid);
}

TEST(CheckVerdict, CoveredAtomsAreNotUncovered) {
  Oracle o = spec_oracle();
  Verdict v;
  v.error = UncoveredAtom{atom("isort([],L)"), {"isort", 2}, std::nullopt};
  EXPECT_FALSE(check_verdict(testing::ins_program(), v, o, testing::isort_spec()).valid);
  v.error = UncoveredAtom{atom("insert(2,[],L)"), {"insert", 3}, std::nullopt};
  EXPECT_TRUE(check_verdict(testing::ins_program(), v, o, testing::isort_spec()).valid);
  EXPECT_TRUE(check_verdict(testing::ins_program(), v, o).valid);
  v.error = UncoveredAtom{atom("isort([2,1],L)"), {"isort", 2}, std::nullopt};
  EXPECT_FALSE(check_verdict(testing::ins_program(), v, o).valid);  // a failed call below is a symptom
}

}  // namespace
}  // namespace lpdiag
