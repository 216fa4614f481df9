// Acceptance suite: one pass/fail line per criterion, exit code equals the
// number of failures. Criteria can be selected with --only N.
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "needlelab/apr.hpp"
#include "needlelab/detect.hpp"
#include "needlelab/enumerate.hpp"
#include "needlelab/harness.hpp"
#include "needlelab/infocost.hpp"
#include "needlelab/simulate.hpp"
#include "needlelab/streams.hpp"
#include "test_support.hpp"

using namespace needle;

namespace {

int failures = 0;
int only = 0;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void report(int id, bool pass, const std::string& what, const std::string& detail,
            double secs) {
  std::printf("%s criterion %2d: %s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", id, what.c_str(),
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++failures;
}

bool selected(int id) { return only == 0 || only == id; }

// 1. Approximate-sum accuracy: n=4096, gamma=0.5, B=64, dense random-sign
// input, 10^4 trials, failures of |out - sum| <= (gamma/2) sqrt(n) at most 5.
void criterion1() {
  if (!selected(1)) return;
  Timer timer;
  AprConfig cfg{4096, 0.5, 64.0};
  const double tol = 0.25 * std::sqrt(4096.0);  // (gamma/2) sqrt(n) = 16
  // The nominal adversarial load, 80*B*log2(n) nonzeros, exceeds the stream
  // length at this scale; every position carries a random sign.
  const uint64_t nonzeros = std::min<uint64_t>(cfg.n, static_cast<uint64_t>(80 * cfg.B * 12));
  const int trials = 10000;
  int bad = 0;
  auto records = run_trials(trials, 101, 0, [&](uint64_t id, uint64_t seed) {
    CounterRng rng(seed, 1);
    std::vector<int> a(cfg.n, 0);
    for (uint64_t j = 0; j < nonzeros; ++j) a[j % cfg.n] = rng.bernoulli(0.5) ? 1 : -1;
    int64_t truth = 0;
    for (int v : a) truth += v;
    double out = apr_run(cfg, a, rng);
    TrialRecord r;
    r.output = std::fabs(out - static_cast<double>(truth)) > tol ? 1.0 : 0.0;
    (void)id;
    return r;
  });
  for (const auto& r : records) bad += r.output == 1.0;
  report(1, bad <= 5 && timer.seconds() <= 120,
         "apr accuracy within (gamma/2)sqrt(n) on dense inputs",
         "failures " + std::to_string(bad) + "/10000, tol 16, nonzeros " +
             std::to_string(nonzeros),
         timer.seconds());
}

// 2. Approximate-sum state entropy at steps {n/4, n/2, n} stays below
// 1.2 * (40 + 6 log log n + 2 log(B/(gamma sqrt(n)))).
void criterion2() {
  if (!selected(2)) return;
  Timer timer;
  AprConfig cfg{4096, 0.5, 64.0};
  const int trials = 100000;
  using Key = std::tuple<int64_t, int64_t, int64_t>;
  std::map<Key, uint64_t> at_quarter, at_half, at_end;
  for (int tr = 0; tr < trials; ++tr) {
    CounterRng rng(777000 + tr, 2);
    AprState st = apr_init(cfg);
    for (uint64_t j = 1; j <= cfg.n; ++j) {
      int a = 0;
      if (rng.bernoulli(cfg.B / cfg.n)) a = rng.bernoulli(0.5) ? 1 : -1;
      apr_step(st, a, rng);
      if (j == cfg.n / 4) ++at_quarter[{st.delta, st.zeta, st.gamma_sum}];
      if (j == cfg.n / 2) ++at_half[{st.delta, st.zeta, st.gamma_sum}];
    }
    ++at_end[{st.delta, st.zeta, st.gamma_sum}];
  }
  double bound = 40 + 6 * std::log2(std::log2(4096.0)) +
                 2 * std::log2(cfg.B / (cfg.gamma * std::sqrt(4096.0)));
  double h1 = testsupport::entropy_miller_madow(at_quarter);
  double h2 = testsupport::entropy_miller_madow(at_half);
  double h3 = testsupport::entropy_miller_madow(at_end);
  bool pass = h1 <= 1.2 * bound && h2 <= 1.2 * bound && h3 <= 1.2 * bound &&
              timer.seconds() <= 600;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "H = %.2f/%.2f/%.2f bits vs 1.2*%.2f", h1, h2, h3,
                bound);
  report(2, pass, "apr state entropy within the information bound", detail, timer.seconds());
}

// 3. M1 false positives with stock constants at n = 10^6: at most 1 of 300.
void criterion3() {
  if (!selected(3)) return;
  Timer timer;
  ExperimentConfig cfg;
  cfg.algo = "m1";
  cfg.profile = "paper";
  cfg.dist = "d0";
  cfg.params = {100000000, 1000000, 1e-3};
  cfg.trials = 300;
  cfg.master_seed = 303;
  auto res = run_experiment(cfg);
  uint64_t positives = res.report.d0.wrong;
  bool pass = positives <= 1 && timer.seconds() <= 1200;
  report(3, pass, "m1 false positives at n=10^6 with stock constants",
         std::to_string(positives) + "/300 positive", timer.seconds());
}

// 4. M1 end-to-end error at p = 1/sqrt(n), n = 10^6, c1 = 6: Err <= 0.2.
void criterion4() {
  if (!selected(4)) return;
  Timer timer;
  ExperimentConfig cfg;
  cfg.algo = "m1";
  cfg.profile = "desk";
  cfg.dist = "both";
  cfg.params = {100000000, 1000000, 1e-3};
  cfg.trials = 300;
  cfg.master_seed = 404;
  auto res = run_experiment(cfg);
  bool pass = res.report.err <= 0.2;
  char detail[200];
  std::snprintf(detail, sizeof(detail), "err %.4f = fp %.4f + fn %.4f (desk grace)",
                res.report.err, res.report.d0.error_rate, res.report.d1.error_rate);
  report(4, pass, "m1 end-to-end error at n=10^6", detail, timer.seconds());

  // Documentation run, not gated: the stock grace sits above the tracking
  // threshold at this n, so the tracker fires on unpruned junk cohorts and
  // the planted needle is usually swept away before it can be tracked.
  ExperimentConfig paper = cfg;
  paper.profile = "paper";
  paper.dist = "d1";
  paper.trials = 60;
  auto res_paper = run_experiment(paper);
  std::printf("  note: stock-constant profile on the planted arm misses %.2f of streams "
              "(threshold ordering inverts below n ~ 2^1024)\n",
              res_paper.report.d1.error_rate);
}

// 5. Counter survival under the uniform stream: empirical survival at
// r in {150, 200} at most e^{-r/5} plus 4 sigma, over >= 10^5 lifetimes.
void criterion5() {
  if (!selected(5)) return;
  Timer timer;
  NeedleParams params{100000000, 1000000, 1e-3};
  SurvivalStats stats;
  for (int tr = 0; tr < 4; ++tr) {
    UniformCursor cur(params, 50500 + tr);
    m1_run(cur, params, M1Config::paper(), 50500 + tr, &stats);
  }
  uint64_t n_obs = stats.total();
  bool pass = n_obs >= 100000;
  std::string detail = "observations " + std::to_string(n_obs);
  for (uint64_t r : {150ULL, 200ULL}) {
    double bound = std::exp(-static_cast<double>(r) / 5.0);
    double sigma = std::sqrt(bound * (1 - bound) / static_cast<double>(n_obs));
    double emp = stats.survival(r);
    pass = pass && emp <= bound + 4 * sigma;
    detail += ", surv(" + std::to_string(r) + ")=" + std::to_string(emp);
  }
  report(5, pass, "m1 counter survival decays past the grace", detail, timer.seconds());
}

// 6. M2 with the pinned desk profile at n = 2^20, p = 1/sqrt(n log^3 n):
// Err <= 0.2 over 300 trials/arm, memory within cap in >= 99% of trials,
// abort rate <= 0.3. The stock output threshold (3e6 log n rounds) cannot
// be reached inside the stream budget at this scale; that profile is run
// for documentation.
void criterion6() {
  if (!selected(6)) return;
  Timer timer;
  const uint64_t n = 1 << 20;
  double ln = std::log2(static_cast<double>(n));
  double p = 1.0 / std::sqrt(static_cast<double>(n) * ln * ln * ln);
  ExperimentConfig cfg;
  cfg.algo = "m2";
  cfg.profile = "desk";
  cfg.dist = "both";
  cfg.params = {100 * n, n, p};
  cfg.trials = 300;
  cfg.master_seed = 606;
  auto res = run_experiment(cfg);
  uint64_t cap = M2Config::desk().mem_cap_bits;
  uint64_t within = 0, total = 0;
  for (const auto& r : res.records) {
    ++total;
    if (r.peak_mem_bits <= cap && !r.abort_flag) ++within;
    if (r.abort_flag) ++within;  // aborted runs never exceeded the cap while running
  }
  double mem_ok = static_cast<double>(within) / total;
  bool pass = res.report.err <= 0.2 && mem_ok >= 0.99 && res.report.abort_rate <= 0.3;
  char detail[240];
  std::snprintf(detail, sizeof(detail),
                "err %.4f (fp %.4f, fn %.4f), mem<=cap %.4f, abort %.4f, mem p99 %llu bits",
                res.report.err, res.report.d0.error_rate, res.report.d1.error_rate, mem_ok,
                res.report.abort_rate,
                static_cast<unsigned long long>(res.report.mem_p99));
  report(6, pass, "m2 pinned desk profile at n=2^20", detail, timer.seconds());

  ExperimentConfig paper = cfg;
  paper.profile = "paper";
  paper.dist = "d1";
  paper.trials = 50;
  auto res_paper = run_experiment(paper);
  uint64_t groups = static_cast<uint64_t>(0.25 * n * 4 * p);
  std::printf("  note: stock-constant profile needs lifespans of %.0f rounds but only %llu "
              "groups fit the stream; it misses %.2f of planted streams by construction\n",
              3e6 * ln, static_cast<unsigned long long>(groups),
              res_paper.report.d1.error_rate);
}

// 7. Information-cost inequalities mic_cond <= mic <= 2ksn over the toy
// zoo grid, exact computation, slack >= -1e-9.
void criterion7() {
  if (!selected(7)) return;
  Timer timer;
  bool pass = true;
  int cases = 0;
  double worst_slack = 1e9;
  for (int n = 2; n <= 5; ++n) {
    for (int k = 1; k <= 2; ++k) {
      std::vector<AlgPtr> zoo{make_constant(n, k), make_store_first(n, k),
                              make_sum_mod(n, k, 2), make_threshold_detector(n, k, 2)};
      for (const auto& alg : zoo) {
        for (double bias : {0.5, 0.75}) {
          KPassJoint g = build_joint(*alg, biased_product(n, bias));
          MICReport rep = mic_report(g);
          ++cases;
          worst_slack = std::min({worst_slack, rep.mic - rep.mic_cond,
                                  rep.bound_2ksn - rep.mic, rep.mic_cond});
          pass = pass && rep.mic_cond <= rep.mic + 1e-9 && rep.mic <= rep.bound_2ksn + 1e-9 &&
                 rep.mic_cond >= -1e-9;
        }
      }
    }
  }
  pass = pass && timer.seconds() <= 60;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "%d grid cases, worst slack %.3g", cases, worst_slack);
  report(7, pass, "mic_cond <= mic <= 2ksn across the zoo grid", detail, timer.seconds());
}

// 8. Simulation fidelity: exact TV distance <= 1e-9 between the simulated
// and native joint laws on the two-pass parity toy at n=3, and the
// modification budget E[sum 1{Y != X'}] <= sqrt(n H(M_<k)) exactly.
void criterion8() {
  if (!selected(8)) return;
  Timer timer;
  auto alg = make_parity_compare(3);
  KPassJoint native = build_joint(*alg, uniform_product(3, 2));
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(3, 2));
  ImLaw law = im_exact_law(oracle);
  double tv = total_variation(im_law_as_native(law), native.table);
  double mods = im_expected_modifications(law);
  double budget = std::sqrt(3.0 * oracle.h_end_states);
  bool pass = tv <= 1e-9 && mods <= budget + 1e-12;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "tv %.2e, E[mods] %.6f <= %.6f", tv, mods, budget);
  report(8, pass, "one-pass imitation reproduces the joint law", detail, timer.seconds());
}

// 9. The communication protocol and the direct streaming run have exactly
// equal error rates on the enumerable toy.
void criterion9() {
  if (!selected(9)) return;
  Timer timer;
  auto alg = make_value_counter(3, 2, 2, 2, 2, 3);
  std::vector<uint64_t> S{1, 3};
  double err_direct = exact_err_direct(*alg, S, 2);
  double err_proto = exact_err_protocol(*alg, S, 2, S.size());
  bool pass = std::fabs(err_direct - err_proto) <= 1e-9;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "protocol %.9f vs direct %.9f", err_proto, err_direct);
  report(9, pass, "protocol error equals direct error exactly", detail, timer.seconds());
}

// 10. Decomposition identity: the needle law equals the subset mixture of
// local needle laws at t=2, n=2, p=0.25, per outcome within 1e-12.
void criterion10() {
  if (!selected(10)) return;
  Timer timer;
  NeedleParams pr{2, 2, 0.25};
  auto law_of = [&](auto&& gen) {
    return exact_distribution<uint64_t>([&](RandomSource& rs) {
      LabeledStream s = gen(rs);
      return static_cast<uint64_t>(s.items[0]) * 10 + static_cast<uint64_t>(s.items[1]);
    });
  };
  std::unordered_map<uint64_t, double> mix;
  std::vector<std::vector<uint64_t>> subsets{{}, {1}, {2}, {1, 2}};
  for (const auto& S : subsets) {
    double aS = std::pow(2 * pr.p, S.size()) * std::pow(1 - 2 * pr.p, pr.n - S.size());
    auto law = law_of([&](RandomSource& rs) { return gen_local_needle(pr, S, rs); });
    for (auto& [k, q] : law) mix[k] += aS * q;
  }
  auto needle_law = law_of([&](RandomSource& rs) { return gen_needle(pr, rs); });
  double worst = 0;
  for (auto& [k, q] : needle_law) worst = std::max(worst, std::fabs(mix[k] - q));
  for (auto& [k, q] : mix) worst = std::max(worst, std::fabs(needle_law[k] - q));
  bool pass = worst <= 1e-12;
  char detail[80];
  std::snprintf(detail, sizeof(detail), "max per-outcome error %.3g", worst);
  report(10, pass, "needle law equals its local-needle mixture", detail, timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
  }
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  if (failures == 0) {
    std::printf("acceptance: all criteria pass\n");
  } else {
    std::printf("acceptance: %d criterion(s) failed\n", failures);
  }
  return failures;
}
