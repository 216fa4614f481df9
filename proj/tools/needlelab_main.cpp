#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "needlelab/apr.hpp"
#include "needlelab/detect.hpp"
#include "needlelab/harness.hpp"
#include "needlelab/infocost.hpp"
#include "needlelab/simulate.hpp"
#include "needlelab/streams.hpp"

using namespace needle;
using nlohmann::json;

namespace {

int cmd_gen(const std::string& kind, uint64_t t, uint64_t n, double p, uint64_t seed,
            uint64_t m, double C, const std::string& order_kind, const std::string& format,
            const std::string& out_path, const std::string& truth_path) {
  NeedleParams params{t, n, p};
  LabeledStream s;
  if (kind == "uniform") {
    s = gen_uniform(params, seed);
  } else if (kind == "needle") {
    s = gen_needle(params, seed);
  } else if (kind == "coin") {
    s = gen_coin(n, seed);
  } else if (kind == "turnstile") {
    s = gen_strict_turnstile_counter(n, C, seed);
  } else if (kind == "tcoins") {
    TCoinsOrder order;
    order.kind = order_kind == "random" ? TCoinsOrder::Kind::Random
                                        : TCoinsOrder::Kind::RoundRobin;
    s = gen_t_coins(n, t, order, seed);
  } else if (kind == "mostlyeq-u" || kind == "mostlyeq-eq") {
    s = gen_mostlyeq(m ? m : n, t,
                     kind == "mostlyeq-u" ? MostlyEqWhich::P_U : MostlyEqWhich::P_Eq, seed);
  } else {
    std::cerr << "unknown stream kind: " << kind << "\n";
    return 2;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot open " << out_path << "\n";
    return 2;
  }
  if (format == "bin") {
    write_binary(s, out);
  } else {
    write_text(s, out);
  }
  json truth;
  truth["kind"] = kind;
  truth["seed"] = seed;
  truth["items"] = s.items.size();
  if (s.label.has_alpha) truth["alpha"] = s.label.alpha;
  if (s.label.kind == StreamKind::TurnstileCounter) truth["went_negative"] = s.went_negative;
  if (truth_path.empty()) {
    std::cout << truth.dump(2) << "\n";
  } else {
    std::ofstream tf(truth_path);
    tf << truth.dump(2) << "\n";
  }
  return 0;
}

int cmd_run_apr(uint64_t n, double gamma, double B, uint64_t trials, uint64_t seed,
                double nonzero_rate, const std::string& report_path) {
  AprConfig cfg{n, gamma, B};
  cfg.validate();
  double tol = 0.5 * gamma * std::sqrt(static_cast<double>(n));
  uint64_t failures = 0;
  long double sq_err = 0;
  for (uint64_t tr = 0; tr < trials; ++tr) {
    CounterRng rng(seed, tr + 1);
    std::vector<int> a(n, 0);
    for (uint64_t j = 0; j < n; ++j)
      if (rng.bernoulli(nonzero_rate)) a[j] = rng.bernoulli(0.5) ? 1 : -1;
    int64_t truth = 0;
    for (int v : a) truth += v;
    double out = apr_run(cfg, a, rng);
    double err = std::fabs(out - static_cast<double>(truth));
    sq_err += err * err;
    if (err > tol) ++failures;
  }
  json rep;
  rep["n"] = n;
  rep["gamma"] = gamma;
  rep["B"] = B;
  rep["p_sample"] = cfg.p_sample();
  rep["trials"] = trials;
  rep["tolerance"] = tol;
  rep["failures"] = failures;
  rep["rms_error"] = trials ? std::sqrt(static_cast<double>(sq_err / trials)) : 0.0;
  std::string text = rep.dump(2);
  if (report_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(report_path);
    f << text << "\n";
  }
  return 0;
}

int cmd_run_needle(ExperimentConfig cfg, const std::string& csv_path,
                   const std::string& report_path, double err_bound) {
  auto result = run_experiment(cfg);
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    write_csv(result.records, f, cfg.record_runtime);
  }
  std::string text = result.report.to_json();
  if (report_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(report_path);
    f << text << "\n";
  }
  if (err_bound > 0 && result.report.err > err_bound) {
    std::cerr << "err " << result.report.err << " exceeds bound " << err_bound << "\n";
    return 1;
  }
  return 0;
}

int cmd_run_coin(uint64_t n, int k, uint64_t trials, uint64_t seed) {
  AlgPtr alg = make_exact_sum(n, k);
  uint64_t majority_ok = 0;
  int peak_bits = 0;
  for (uint64_t tr = 0; tr < trials; ++tr) {
    LabeledStream s = gen_coin(n, mix64(seed ^ (tr + 1)));
    Transcript t = run_k_pass(*alg, s.items, tr, false);
    int64_t truth = 0;
    for (int64_t b : s.items) truth += b;
    int maj_true = truth >= 0 ? 1 : 0;
    int maj_out = t.output >= 0 ? 1 : 0;
    if (maj_true == maj_out) ++majority_ok;
    peak_bits = std::max(peak_bits, t.peak_width);
  }
  json rep;
  rep["n"] = n;
  rep["k"] = k;
  rep["trials"] = trials;
  rep["majority_success"] = trials ? static_cast<double>(majority_ok) / trials : 0.0;
  rep["peak_memory_bits"] = peak_bits;
  std::cout << rep.dump(2) << "\n";
  return 0;
}

int cmd_infocost_check() {
  struct Case {
    std::string name;
    AlgPtr alg;
  };
  bool ok = true;
  std::cout << "algorithm            n k  mu        mic       mic_cond  2ksn\n";
  for (int n = 2; n <= 5; ++n) {
    for (int k = 1; k <= 2; ++k) {
      std::vector<Case> zoo = {
          {"constant", make_constant(n, k)},
          {"store_first", make_store_first(n, k)},
          {"sum_mod4", make_sum_mod(n, k, 2)},
          {"threshold2", make_threshold_detector(n, k, 2)},
      };
      for (const auto& c : zoo) {
        for (double bias : {0.5, 0.75}) {
          KPassJoint joint = build_joint(*c.alg, biased_product(n, bias));
          MICReport rep = mic_report(joint);
          bool pass = rep.mic_cond <= rep.mic + 1e-9 && rep.mic <= rep.bound_2ksn + 1e-9 &&
                      rep.mic_cond >= -1e-9;
          ok = ok && pass;
          std::printf("%-20s %d %d  Ber(%.2f)  %-9.5f %-9.5f %-6.0f %s\n", c.name.c_str(), n, k,
                      bias, rep.mic, rep.mic_cond, rep.bound_2ksn, pass ? "ok" : "VIOLATION");
        }
      }
    }
  }
  std::cout << (ok ? "all information-cost inequalities hold\n"
                   : "information-cost inequality violated\n");
  return ok ? 0 : 1;
}

int cmd_simulate_check() {
  bool ok = true;
  // Exactness of the one-pass imitation on a two-pass toy.
  {
    AlgPtr alg = make_parity_compare(3);
    KPassJoint native = build_joint(*alg, uniform_product(3, 2));
    ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(3, 2));
    ImLaw law = im_exact_law(oracle);
    double tv = total_variation(im_law_as_native(law), native.table);
    double mods = im_expected_modifications(law);
    double budget = std::sqrt(3.0 * oracle.h_end_states);
    std::printf("imitation tv distance: %.3e (<= 1e-9)\n", tv);
    std::printf("expected modifications: %.6f <= %.6f\n", mods, budget);
    ok = ok && tv <= 1e-9 && mods <= budget + 1e-9;
  }
  // Protocol equivalence on an enumerable needle toy.
  {
    AlgPtr alg = make_value_counter(3, 2, 2, 2, 2, 3);
    std::vector<uint64_t> S{1, 3};
    double err_direct = exact_err_direct(*alg, S, 2);
    double err_proto = exact_err_protocol(*alg, S, 2, S.size());
    std::printf("protocol err: %.9f  direct err: %.9f\n", err_proto, err_direct);
    ok = ok && std::fabs(err_proto - err_direct) <= 1e-9;
  }
  std::cout << (ok ? "simulation checks hold\n" : "simulation check failed\n");
  return ok ? 0 : 1;
}

int cmd_calibrate(uint64_t t, uint64_t n, double p, uint64_t trials, uint64_t seed,
                  int threads, const std::string& out_path) {
  NeedleParams params{t, n, p};
  auto grid = default_m2_grid(params);
  auto result = calibrate_m2(params, grid, trials, seed, threads);
  std::string text = result.to_json();
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out_path);
    f << text << "\n";
    std::cout << "calibration written to " << out_path << "\n";
  }
  if (result.best < 0) {
    std::cerr << "feasible set is empty\n";
    return 1;
  }
  return 0;
}

int cmd_report(const std::string& csv_path, const std::string& out_dir) {
  std::ifstream f(csv_path);
  if (!f) {
    std::cerr << "cannot open " << csv_path << "\n";
    return 2;
  }
  auto records = read_csv(f);
  if (records.empty()) {
    std::cerr << "no records\n";
    return 1;
  }
  plot_error_vs_p(records, out_dir + "/error_vs_p.svg");
  plot_memory_vs_p(records, out_dir + "/memory_vs_p.svg");
  std::cout << summarize(records).to_json() << "\n";
  std::cout << "plots written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming needle/coin experiment toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a labeled stream");
  std::string kind = "uniform", format = "text", out_path = "stream.txt", truth_path;
  std::string order_kind = "roundrobin";
  uint64_t t = 1000, n = 1000, seed = 1, m = 0;
  double p = 0.0, C = 1.0;
  gen->add_option("--kind", kind, "uniform|needle|coin|turnstile|tcoins|mostlyeq-u|mostlyeq-eq");
  gen->add_option("--t", t);
  gen->add_option("--n", n);
  gen->add_option("--p", p);
  gen->add_option("--m", m, "parties for mostlyeq");
  gen->add_option("--C", C, "turnstile prefix constant");
  gen->add_option("--order", order_kind, "roundrobin|random (tcoins)");
  gen->add_option("--seed", seed);
  gen->add_option("--format", format, "text|bin");
  gen->add_option("--out", out_path);
  gen->add_option("--truth-out", truth_path);

  // run-apr
  auto* rapr = app.add_subcommand("run-apr", "approximate-sum accuracy runs");
  uint64_t apr_n = 4096, apr_trials = 1000, apr_seed = 1;
  double apr_gamma = 0.5, apr_B = 64, nonzero_rate = 0.01;
  std::string apr_report;
  rapr->add_option("--n", apr_n);
  rapr->add_option("--gamma", apr_gamma);
  rapr->add_option("--B", apr_B);
  rapr->add_option("--trials", apr_trials);
  rapr->add_option("--seed", apr_seed);
  rapr->add_option("--nonzero-rate", nonzero_rate);
  rapr->add_option("--report", apr_report);

  // run-needle
  auto* rn = app.add_subcommand("run-needle", "needle detector experiment");
  std::string algo = "m1", profile = "paper", dist = "both", cfg_path, csv_path, report_path;
  uint64_t nd_t = 1000000, nd_n = 1000000, nd_trials = 100, nd_seed = 1, window = 0;
  double nd_p = 1e-3, c1 = 0, kout = 0, err_bound = 0;
  int64_t grace = -1;
  uint64_t mem_cap_bits = 0;
  int threads = 0;
  rn->add_option("--config", cfg_path, "JSON config; flags override");
  rn->add_option("--algo", algo, "m1|m2|collision");
  rn->add_option("--profile", profile, "paper|desk");
  rn->add_option("--dist", dist, "d0|d1|both");
  rn->add_option("--t", nd_t);
  rn->add_option("--n", nd_n);
  rn->add_option("--p", nd_p);
  rn->add_option("--trials", nd_trials);
  rn->add_option("--seed", nd_seed);
  rn->add_option("--threads", threads);
  rn->add_option("--c1", c1, "density constant override");
  rn->add_option("--kout", kout, "m2 output threshold multiplier override");
  rn->add_option("--grace", grace, "retention grace override");
  rn->add_option("--mem-cap-bits", mem_cap_bits, "m2 memory cap override");
  rn->add_option("--window", window, "collision window");
  rn->add_option("--csv", csv_path);
  rn->add_option("--report", report_path);
  rn->add_option("--assert-err-below", err_bound, "exit 1 unless err <= bound");

  // run-coin
  auto* rc = app.add_subcommand("run-coin", "exact-sum coin runs");
  uint64_t coin_n = 10001, coin_trials = 1000, coin_seed = 1;
  int coin_k = 1;
  rc->add_option("--n", coin_n);
  rc->add_option("--k", coin_k);
  rc->add_option("--trials", coin_trials);
  rc->add_option("--seed", coin_seed);

  auto* ic = app.add_subcommand("infocost-check", "information-cost inequalities on the toy zoo");
  auto* sc = app.add_subcommand("simulate-check", "simulation and protocol fidelity checks");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "grid-search a detector profile");
  uint64_t cal_t = 104857600, cal_n = 1048576, cal_trials = 60, cal_seed = 7;
  double cal_p = 0.0;
  int cal_threads = 0;
  std::string cal_out = "m2_calibration.json";
  cal->add_option("--t", cal_t);
  cal->add_option("--n", cal_n);
  cal->add_option("--p", cal_p, "0 -> 1/sqrt(n log^3 n)");
  cal->add_option("--trials", cal_trials);
  cal->add_option("--seed", cal_seed);
  cal->add_option("--threads", cal_threads);
  cal->add_option("--out", cal_out);

  // report
  auto* rep = app.add_subcommand("report", "plots and summary from a trial CSV");
  std::string rep_csv = "trials.csv", rep_dir = ".";
  rep->add_option("--csv", rep_csv);
  rep->add_option("--out-dir", rep_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(kind, t, n, p, seed, m, C, order_kind, format, out_path, truth_path);
    if (rapr->parsed())
      return cmd_run_apr(apr_n, apr_gamma, apr_B, apr_trials, apr_seed, nonzero_rate, apr_report);
    if (rn->parsed()) {
      ExperimentConfig cfg;
      if (!cfg_path.empty()) {
        std::ifstream f(cfg_path);
        if (!f) {
          std::cerr << "cannot open " << cfg_path << "\n";
          return 2;
        }
        std::stringstream ss;
        ss << f.rdbuf();
        cfg = ExperimentConfig::from_json(ss.str());
      }
      if (rn->count("--algo") || cfg_path.empty()) cfg.algo = algo;
      if (rn->count("--profile") || cfg_path.empty()) cfg.profile = profile;
      if (rn->count("--dist") || cfg_path.empty()) cfg.dist = dist;
      if (rn->count("--t") || cfg_path.empty()) cfg.params.t = nd_t;
      if (rn->count("--n") || cfg_path.empty()) cfg.params.n = nd_n;
      if (rn->count("--p") || cfg_path.empty()) cfg.params.p = nd_p;
      if (rn->count("--trials") || cfg_path.empty()) cfg.trials = nd_trials;
      if (rn->count("--seed") || cfg_path.empty()) cfg.master_seed = nd_seed;
      if (rn->count("--threads")) cfg.threads = threads;
      if (rn->count("--window")) cfg.collision_window = window;
      if (cfg.algo == "m1") {
        M1Config mc = cfg.m1 ? *cfg.m1
                             : (cfg.profile == "desk" ? M1Config::desk() : M1Config::paper());
        if (c1 > 0) mc.c1 = c1;
        if (grace >= 0) mc.grace = static_cast<uint64_t>(grace);
        cfg.m1 = mc;
      } else if (cfg.algo == "m2") {
        M2Config mc = cfg.m2 ? *cfg.m2
                             : (cfg.profile == "desk" ? M2Config::desk() : M2Config::paper());
        if (c1 > 0) mc.c1 = c1;
        if (kout > 0) mc.kout = kout;
        if (grace >= 0) mc.grace = static_cast<uint64_t>(grace);
        if (mem_cap_bits > 0) mc.mem_cap_bits = mem_cap_bits;
        cfg.m2 = mc;
      }
      return cmd_run_needle(cfg, csv_path, report_path, err_bound);
    }
    if (rc->parsed()) return cmd_run_coin(coin_n, coin_k, coin_trials, coin_seed);
    if (ic->parsed()) return cmd_infocost_check();
    if (sc->parsed()) return cmd_simulate_check();
    if (cal->parsed()) {
      double pp = cal_p;
      if (pp <= 0) {
        double ln = std::log2(static_cast<double>(cal_n));
        pp = 1.0 / std::sqrt(static_cast<double>(cal_n) * ln * ln * ln);
      }
      return cmd_calibrate(cal_t, cal_n, pp, cal_trials, cal_seed, cal_threads, cal_out);
    }
    if (rep->parsed()) return cmd_report(rep_csv, rep_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
