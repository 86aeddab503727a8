#include "audit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "audit/error.hpp"

namespace audit::stats {

void StatsConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(Errc::config_error, "stats.alpha must be in (0, 1)");
  if (!(chance_p0 > 0.0 && chance_p0 < 1.0))
    throw Error(Errc::config_error, "stats.chance_p0 must be in (0, 1)");
  if (!(chance_p0 < effect_p1 && effect_p1 <= 1.0))
    throw Error(Errc::config_error, "stats.effect_p1 must satisfy chance_p0 < effect_p1 <= 1");
  if (!(power_target >= 0.0 && power_target <= 1.0))
    throw Error(Errc::config_error, "stats.power_target must be in [0, 1]");
}

const char* to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::likely_in_training: return "likely_in_training";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

double chance_probability(int num_paraphrases) {
  if (num_paraphrases < 1)
    throw Error(Errc::bad_args, "num_paraphrases must be >= 1");
  return 1.0 / static_cast<double>(num_paraphrases + 1);
}

namespace {

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double binomial_pvalue(int n, int c, double p0) {
  if (n < 0 || c < 0 || c > n)
    throw Error(Errc::bad_args, "binomial tail needs 0 <= c <= n");
  if (!(p0 > 0.0 && p0 < 1.0))
    throw Error(Errc::bad_args, "binomial tail needs 0 < p0 < 1");
  if (c == 0) return 1.0;

  const double lp = std::log(p0);
  const double lq = std::log1p(-p0);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n - c + 1));
  for (int k = c; k <= n; ++k) {
    terms.push_back(log_choose(n, k) + k * lp + (n - k) * lq);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - m);
  return std::min(1.0, std::exp(m) * sum);
}

double roc_auc(std::span<const double> positive_scores,
               std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw Error(Errc::empty_class, "AUC needs at least one score in each class");
  double credit = 0.0;
  for (double p : positive_scores) {
    for (double q : negative_scores) {
      if (p > q) credit += 1.0;
      else if (p == q) credit += 0.5;
    }
  }
  return credit / (static_cast<double>(positive_scores.size()) *
                   static_cast<double>(negative_scores.size()));
}

RocCurve roc_curve(std::span<const double> positive_scores,
                   std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw Error(Errc::empty_class, "ROC needs at least one score in each class");

  std::set<double, std::greater<double>> thresholds(positive_scores.begin(),
                                                    positive_scores.end());
  thresholds.insert(negative_scores.begin(), negative_scores.end());

  RocCurve curve;
  curve.points.push_back(
      {std::numeric_limits<double>::infinity(), 0.0, 0.0});
  const double np = static_cast<double>(positive_scores.size());
  const double nn = static_cast<double>(negative_scores.size());
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (double p : positive_scores) tp += p >= t ? 1.0 : 0.0;
    for (double q : negative_scores) fp += q >= t ? 1.0 : 0.0;
    curve.points.push_back({t, fp / nn, tp / np});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.false_positive_rate - a.false_positive_rate) *
            (b.true_positive_rate + a.true_positive_rate) / 2.0;
  }
  curve.auc = area;
  return curve;
}

namespace {

// P(X >= c | Binomial(n, p)) with the degenerate p = 1 case admitted.
double upper_tail(int n, int c, double p) {
  if (c <= 0) return 1.0;
  if (p >= 1.0) return c <= n ? 1.0 : 0.0;
  return binomial_pvalue(n, c, p);
}

}  // namespace

SampleSizeResult required_sample_size(double p0, double p1, double alpha, double power) {
  if (!(p0 > 0.0 && p0 < 1.0))
    throw Error(Errc::bad_args, "required_sample_size needs 0 < p0 < 1");
  if (!(p0 < p1 && p1 <= 1.0))
    throw Error(Errc::bad_args, "required_sample_size needs p0 < p1 <= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(Errc::bad_args, "required_sample_size needs 0 < alpha < 1");
  if (!(power >= 0.0 && power <= 1.0))
    throw Error(Errc::bad_args, "required_sample_size needs 0 <= power <= 1");

  constexpr int kMaxN = 10000;
  for (int n = 1; n <= kMaxN; ++n) {
    // The tail at fixed n is nonincreasing in c, so the smallest c meeting
    // the alpha constraint is found by bisection over 0..n.
    int lo = 0, hi = n + 1;  // hi: no realizable c works
    while (lo < hi) {
      const int mid = lo + (hi - lo) / 2;
      if (binomial_pvalue(n, mid, p0) <= alpha) hi = mid;
      else lo = mid + 1;
    }
    if (lo > n) continue;
    if (upper_tail(n, lo, p1) >= power) return {n, lo};
  }
  throw Error(Errc::bad_args, "no sample size up to 10000 meets the constraints");
}

namespace {

long long tokens_of_chars(long long chars) { return (chars + 3) / 4; }

CostBreakdown breakdown(const CostPlan& plan) {
  const TokenModel& t = plan.tokens;
  const long long paraphrase_prompt =
      tokens_of_chars(t.passage_chars + t.paraphrase_prompt_overhead_chars);
  const long long paraphrase_completion = tokens_of_chars(
      static_cast<long long>(plan.paraphrases_per_call) * t.paraphrase_completion_chars);
  const long long option_count = plan.paraphrases_per_call + 1;
  const long long trial_prompt = tokens_of_chars(
      t.stem_chars + option_count * t.passage_chars + t.instruction_chars);
  const long long trial_completion = tokens_of_chars(t.answer_chars);

  CostBreakdown out;
  out.paraphrase_tokens = static_cast<long long>(plan.passages) * plan.paraphrase_calls *
                          (paraphrase_prompt + paraphrase_completion);
  out.trial_tokens = static_cast<long long>(plan.passages) * plan.trials_per_question *
                     (trial_prompt + trial_completion);
  out.total = out.paraphrase_tokens + out.trial_tokens;
  return out;
}

}  // namespace

long long cost_estimate(const CostPlan& plan) {
  if (plan.passages < 1 || plan.paraphrase_calls < 1 || plan.paraphrases_per_call < 1 ||
      plan.trials_per_question < 1)
    throw Error(Errc::bad_args, "cost plan counts must be positive");
  return breakdown(plan).total;
}

PlanComparison compare_plans(double effect_p1, double alpha, double power,
                             int trials_per_question, const TokenModel& tokens) {
  if (trials_per_question < 1)
    throw Error(Errc::bad_args, "trials_per_question must be >= 1");

  PlanComparison cmp;
  cmp.size3 = required_sample_size(chance_probability(3), effect_p1, alpha, power);
  cmp.size4 = required_sample_size(chance_probability(4), effect_p1, alpha, power);

  auto plan_for = [&](int paraphrases, int n_trials) {
    CostPlan plan;
    plan.passages = (n_trials + trials_per_question - 1) / trials_per_question;
    plan.paraphrase_calls = 1;
    plan.paraphrases_per_call = paraphrases;
    plan.trials_per_question = trials_per_question;
    plan.tokens = tokens;
    return plan;
  };
  cmp.cost3 = breakdown(plan_for(3, cmp.size3.n));
  cmp.cost4 = breakdown(plan_for(4, cmp.size4.n));
  cmp.relative_savings =
      1.0 - static_cast<double>(cmp.cost4.total) / static_cast<double>(cmp.cost3.total);
  return cmp;
}

DocumentVerdict make_verdict(std::string doc_id, int n_trials, int n_correct,
                             const StatsConfig& cfg) {
  if (n_trials < 1) throw Error(Errc::no_trials, "verdict needs at least one trial");
  if (n_correct < 0 || n_correct > n_trials)
    throw Error(Errc::bad_args, "n_correct must be in [0, n_trials]");
  DocumentVerdict v;
  v.doc_id = std::move(doc_id);
  v.n_trials = n_trials;
  v.n_correct = n_correct;
  v.detection_rate = static_cast<double>(n_correct) / static_cast<double>(n_trials);
  v.chance_p0 = cfg.chance_p0;
  v.p_value = binomial_pvalue(n_trials, n_correct, cfg.chance_p0);
  v.verdict = v.p_value < cfg.alpha ? Verdict::likely_in_training : Verdict::inconclusive;
  v.config = cfg;
  return v;
}

DocumentVerdict make_verdict(std::string doc_id, std::span<const quiz::QuizTrial> trials,
                             const StatsConfig& cfg) {
  int correct = 0;
  for (const auto& t : trials) correct += t.correct ? 1 : 0;
  return make_verdict(std::move(doc_id), static_cast<int>(trials.size()), correct, cfg);
}

}  // namespace audit::stats
