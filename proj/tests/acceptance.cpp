// Acceptance gate: ten numbered criteria, one PASS/FAIL line each, nonzero
// exit when any criterion fails.  Tolerances are pinned here and are not
// configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "npgflow/diagnostics.hpp"
#include "npgflow/envs.hpp"
#include "npgflow/flow.hpp"
#include "npgflow/learner.hpp"
#include "npgflow/natural_gradient.hpp"
#include "npgflow/objective.hpp"
#include "npgflow/runner.hpp"

using namespace npgflow;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(int id, bool pass, double secs, const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("criterion %2d  %s  %7.2fs  %s\n", id, pass ? "PASS" : "FAIL", secs,
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

// The two acceptance environments.  Behaviors match the shipped configs:
// uniform logging on the fixture, softmax-of-Q (temperature 2, floor 0.05)
// on the random 5-context/3-action environment.
struct AcceptanceEnv {
  std::string name;
  SyntheticEnv env;
  BehaviorSpec behavior;
  PolicyClass pc;
  PolicyParams oracle;
  FlowConfig flow;
};

std::vector<AcceptanceEnv> make_envs() {
  std::vector<AcceptanceEnv> envs;

  {
    SyntheticEnv env = fixture_a();
    BehaviorSpec behavior;  // uniform, floor 0.01
    PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
    PolicyParams oracle = oracle_in_class(env, pc, 0.5);
    FlowConfig flow;
    flow.step_size = 0.05;
    envs.push_back({"fixture_a", std::move(env), behavior, std::move(pc), std::move(oracle),
                    flow});
  }
  {
    SyntheticEnv env = make_random_env(5, 3, 42);
    BehaviorSpec behavior;
    behavior.kind = BehaviorSpec::Kind::SoftmaxOfQ;
    behavior.temperature = 2.0;
    behavior.floor = 0.05;
    PolicyClass pc = PolicyClass::tabular_softmax(5, 3);
    PolicyParams oracle = oracle_in_class(env, pc, 0.5);
    FlowConfig flow;
    flow.step_size = 0.02;
    envs.push_back({"env_5x3", std::move(env), behavior, std::move(pc), std::move(oracle),
                    flow});
  }
  return envs;
}

LearnerConfig learner_config(const AcceptanceEnv& ae, std::uint64_t seed) {
  LearnerConfig lc;
  lc.lambda = 0.5;
  lc.seed = seed;
  lc.flow = ae.flow;
  return lc;
}

struct CampaignRun {
  bool ok = false;
  std::string error;
  TheoremOneReport report;
  PolicyParams selected{Eigen::VectorXd()};
  double dominance_gap = 0.0;  // J~(split1, selected) - J~(split1, warm start)
};

CampaignRun run_seed(const AcceptanceEnv& ae, std::uint64_t seed, int n_per_split) {
  CampaignRun out;
  try {
    LoggedDataset data = sample_logged_dataset(ae.env, ae.behavior,
                                               3 * static_cast<std::size_t>(n_per_split), seed);
    DebiasedResult res = debiased_policy_learning(data, ae.pc, learner_config(ae, seed));
    DatasetView grad_split = view_of(data, res.splits.split0);
    DatasetView value_split = view_of(data, res.splits.split1);
    out.report = compute_terms(ae.env, grad_split, value_split, ae.pc, 0.5, res, ae.oracle);
    const SoftValueConfig vc{0.5, EntropyEstimator::ExactContextAverage};
    out.dominance_gap = empirical_soft_value(value_split, ae.pc, res.selected_params, vc) -
                        empirical_soft_value(value_split, ae.pc, res.erm_params, vc);
    out.selected = res.selected_params;
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

int main() {
  std::printf("acceptance suite (single-threaded)\n");
  std::vector<AcceptanceEnv> envs = make_envs();
  const SyntheticEnv& fixture = envs[0].env;
  const PolicyClass& fixture_pc = envs[0].pc;

  // 1. Closed-form oracle match on the fixture.
  {
    auto t0 = std::chrono::steady_clock::now();
    Eigen::MatrixXd pi = soft_optimal_policy_nonparametric(fixture, 0.5);
    double err_pi = std::max(std::abs(pi(0, 0) - 0.8320), std::abs(pi(0, 1) - 0.1680));
    double j_star = soft_optimal_value_nonparametric(fixture, 0.5);
    double err_j = std::abs(j_star - 0.9920);
    double secs = seconds_since(t0);
    bool pass = err_pi <= 1e-4 && err_j <= 1e-4 && secs < 1.0;
    report(1, pass, secs,
           "closed-form optimum: |pi - (0.8320, 0.1680)| = " + fmt(err_pi) +
               ", |J - 0.9920| = " + fmt(err_j) + " (tol 1e-4 each)");
  }

  // 2. Gradient fixed point at the soft optimum.
  {
    auto t0 = std::chrono::steady_clock::now();
    PolicyParams theta_star{Eigen::VectorXd::Constant(1, 1.6)};  // log(p0/p1) = 0.8/0.5
    GradientSolve s = population_natural_gradient(fixture, fixture_pc, theta_star, 0.5);
    Eigen::MatrixXd adv = advantage_function(fixture, fixture_pc, theta_star, 0.5);
    double adv_sup = adv.cwiseAbs().maxCoeff();
    double secs = seconds_since(t0);
    bool pass = s.grad_sq_norm <= 1e-12 && adv_sup <= 1e-10 && secs < 1.0;
    report(2, pass, secs,
           "fixed point: u'Fu = " + fmt(s.grad_sq_norm) + " (tol 1e-12), sup|advantage| = " +
               fmt(adv_sup) + " (tol 1e-10)");
  }

  // 3. Projection equivalence on 20 random (env, policy, lambda) triples.
  {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(90210);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int m = 1 + static_cast<int>(rng() % 4);
      const int k = 2 + static_cast<int>(rng() % 3);
      SyntheticEnv env = make_random_env(m, k, rng());
      PolicyClass pc = PolicyClass::tabular_softmax(m, k);
      std::normal_distribution<double> gauss(0.0, 1.5);
      Eigen::VectorXd theta(pc.param_dim());
      for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = gauss(rng);
      std::uniform_real_distribution<double> lam(0.1, 2.1);
      const double lambda = lam(rng);
      PolicyParams params{theta};
      GradientSolve s = population_natural_gradient(env, pc, params, lambda);
      Eigen::MatrixXd table = gradient_table(env, pc, params, s.u);
      Eigen::MatrixXd adv = advantage_function(env, pc, params, lambda);
      worst = std::max(worst, (table - adv).cwiseAbs().maxCoeff());
    }
    double secs = seconds_since(t0);
    bool pass = worst <= 1e-10 && secs < 5.0;
    report(3, pass, secs,
           "projection equivalence on 20 triples: max |nat-grad - advantage| = " + fmt(worst) +
               " (tol 1e-10)");
  }

  // 4. Finite-difference checks: directional derivative of the population
  //    value, and initial flow speed against u'Fu.
  {
    auto t0 = std::chrono::steady_clock::now();
    double worst_dir = 0.0;
    {
      std::mt19937_64 rng(1313);
      std::normal_distribution<double> gauss(0.0, 1.0);
      SyntheticEnv rand_env = make_random_env(4, 3, 11);
      PolicyClass rand_pc = PolicyClass::tabular_softmax(4, 3);
      struct Case {
        const SyntheticEnv* env;
        const PolicyClass* pc;
        Eigen::VectorXd theta;
      };
      std::vector<Case> cases;
      cases.push_back({&fixture, &fixture_pc, Eigen::VectorXd::Zero(1)});
      Eigen::VectorXd theta(rand_pc.param_dim());
      for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = gauss(rng);
      cases.push_back({&rand_env, &rand_pc, theta});

      const double h = 1e-5;
      for (const Case& c : cases) {
        PolicyParams at{c.theta};
        GradientSolve s = population_natural_gradient(*c.env, *c.pc, at, 0.5);
        Eigen::VectorXd pairing = s.fisher * s.u;  // P[G . s_j]
        for (Eigen::Index j = 0; j < c.theta.size(); ++j) {
          Eigen::VectorXd up = c.theta, dn = c.theta;
          up[j] += h;
          dn[j] -= h;
          const double fd = (population_soft_value(*c.env, *c.pc, PolicyParams{up}, 0.5) -
                             population_soft_value(*c.env, *c.pc, PolicyParams{dn}, 0.5)) /
                            (2 * h);
          worst_dir = std::max(worst_dir, std::abs(fd - pairing[j]));
        }
      }
    }

    double flow_rel = 0.0;
    {
      LoggedDataset data = sample_logged_dataset(envs[0].env, envs[0].behavior, 6000, 808);
      std::vector<int> all(data.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      DatasetView view = view_of(data, all);
      const double h = 1e-3;
      FlowConfig fc;
      fc.step_size = h;
      fc.t_max = 5 * h;
      fc.stop_grad_norm = 0.0;
      Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);
      FlowPath path = integrate_flow(view, fixture_pc, 0.5, theta0, fc, std::nullopt);
      const SoftValueConfig vc{0.5, EntropyEstimator::ExactContextAverage};
      const double j0 = empirical_soft_value(view, fixture_pc, PolicyParams{theta0}, vc);
      const double jh =
          empirical_soft_value(view, fixture_pc, PolicyParams{params_at(path, h)}, vc);
      const double fd = (jh - j0) / h;
      flow_rel = std::abs(fd / path.checkpoints.front().grad_sq_norm - 1.0);
    }

    double secs = seconds_since(t0);
    bool pass = worst_dir <= 1e-5 && flow_rel <= 0.05 && secs < 10.0;
    report(4, pass, secs,
           "finite differences: directional-derivative error " + fmt(worst_dir) +
               " (tol 1e-5), flow-speed relative error " + fmt(flow_rel) + " (tol 5%)");
  }

  // Shared campaign for criteria 5, 6, 8: 200 seeds per environment,
  // N = 2000 per split, lambda = 0.5.
  const int kCampaignSeeds = 200;
  const int kCampaignN = 2000;
  std::vector<std::vector<CampaignRun>> campaign(envs.size());
  auto campaign_t0 = std::chrono::steady_clock::now();
  for (std::size_t e = 0; e < envs.size(); ++e) {
    campaign[e].reserve(kCampaignSeeds);
    for (int seed = 0; seed < kCampaignSeeds; ++seed)
      campaign[e].push_back(run_seed(envs[e], static_cast<std::uint64_t>(seed), kCampaignN));
  }
  const double campaign_secs = seconds_since(campaign_t0);

  // 5. Theorem bound campaign: zero violations beyond eps_tol among
  //    interior runs; interior fraction reported.
  {
    int failed = 0, interior = 0, violations = 0, total = 0;
    std::ostringstream fractions;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      int env_interior = 0;
      for (const CampaignRun& r : campaign[e]) {
        ++total;
        if (!r.ok) {
          ++failed;
          continue;
        }
        if (r.report.interior) {
          ++interior;
          ++env_interior;
          if (r.report.bound_slack < -r.report.eps_tol) ++violations;
        }
      }
      fractions << (e ? ", " : "") << envs[e].name << " " << env_interior << "/"
                << campaign[e].size();
    }
    bool pass = failed == 0 && violations == 0 && campaign_secs < 300.0;
    report(5, pass, campaign_secs,
           "bound campaign: " + std::to_string(violations) + " violations beyond eps_tol, " +
               std::to_string(failed) + " failed runs of " + std::to_string(total) +
               "; interior " + fractions.str() + " (informational target >= 80%)");
  }

  // 6. Stationarity orthogonality on every interior campaign run.
  {
    auto t0 = std::chrono::steady_clock::now();
    int checked = 0, violations = 0;
    double worst_ratio = 0.0;
    for (const auto& env_runs : campaign)
      for (const CampaignRun& r : env_runs) {
        if (!r.ok || !r.report.interior) continue;
        ++checked;
        const double bound = 1e-3 * r.report.norm_grad0 * r.report.norm_grad1;
        const double ratio = std::abs(r.report.stationarity_residual) /
                             (r.report.norm_grad0 * r.report.norm_grad1 + 1e-300);
        worst_ratio = std::max(worst_ratio, ratio);
        if (std::abs(r.report.stationarity_residual) > bound) ++violations;
      }
    double secs = seconds_since(t0);
    bool pass = checked > 0 && violations == 0;
    report(6, pass, secs,
           "stationarity: " + std::to_string(violations) + "/" + std::to_string(checked) +
               " interior runs violate |<G1,G0>| <= 1e-3 |G0||G1|; worst ratio " +
               fmt(worst_ratio));
  }

  // 7. Regret decay over N in {500, 2000, 8000}, 100 seeds, both envs.
  {
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> ns = {500, 2000, 8000};
    bool pass = true;
    int failed = 0;
    std::ostringstream detail;
    for (std::size_t e = 0; e < envs.size(); ++e) {
      std::vector<double> means;
      for (int n : ns) {
        double sum = 0.0;
        int count = 0;
        for (int seed = 0; seed < 100; ++seed) {
          CampaignRun r = run_seed(envs[e], static_cast<std::uint64_t>(seed), n);
          if (!r.ok) {
            ++failed;
            continue;
          }
          sum += exact_regret(envs[e].env, envs[e].pc, 0.5, r.selected, envs[e].oracle)
                     .soft_regret;
          ++count;
        }
        means.push_back(count > 0 ? sum / count : std::nan(""));
      }
      detail << (e ? "; " : "") << envs[e].name << " means";
      for (double m : means) detail << " " << fmt(m);
      detail << ", ratios";
      for (std::size_t i = 0; i + 1 < means.size(); ++i) {
        const double ratio = means[i] / means[i + 1];
        detail << " " << fmt(ratio);
        if (!(means[i] > means[i + 1]) || ratio < 1.4 || ratio > 3.5) pass = false;
      }
    }
    if (failed > 0) pass = false;
    double secs = seconds_since(t0);
    pass = pass && secs < 600.0;
    report(7, pass, secs,
           "regret decay (ratio tol [1.4, 3.5]): " + detail.str() +
               (failed ? "; " + std::to_string(failed) + " failed runs" : ""));
  }

  // 8. Selection dominance on the value split and entropy-curvature
  //    positivity along the mixture submodel.
  {
    auto t0 = std::chrono::steady_clock::now();
    int dominated = 0, total_ok = 0, curvature_bad = 0;
    double min_curvature = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < envs.size(); ++e)
      for (const CampaignRun& r : campaign[e]) {
        if (!r.ok) continue;
        ++total_ok;
        if (r.dominance_gap < 0.0) ++dominated;
        for (int i = 0; i <= 20; ++i) {
          const double eps = i / 20.0;
          const double curv =
              entropy_submodel_curvature(envs[e].env, envs[e].pc, r.selected, envs[e].oracle,
                                         eps);
          min_curvature = std::min(min_curvature, curv);
          if (!(curv > 0.0)) ++curvature_bad;
        }
      }
    double secs = seconds_since(t0);
    bool pass = total_ok > 0 && dominated == 0 && curvature_bad == 0 && secs < 60.0;
    report(8, pass, secs,
           "selection dominance holds in " + std::to_string(total_ok - dominated) + "/" +
               std::to_string(total_ok) + " runs; min S'' over 21-point grid = " +
               fmt(min_curvature) + " (must be > 0)");
  }

  // 9. Hard/soft regret gap on 1000 random policies per environment.
  {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(5150);
    std::normal_distribution<double> gauss(0.0, 3.0);
    int violations = 0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (const AcceptanceEnv& ae : envs) {
      const double cap = 0.5 * std::log(static_cast<double>(ae.env.num_actions()));
      for (int trial = 0; trial < 1000; ++trial) {
        Eigen::VectorXd theta(ae.pc.param_dim());
        for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = gauss(rng);
        RegretPair reg = exact_regret(ae.env, ae.pc, 0.5, PolicyParams{theta}, ae.oracle);
        const double excess = reg.hard_regret - reg.soft_regret - cap;
        worst_excess = std::max(worst_excess, excess);
        if (excess > 1e-12) ++violations;
      }
    }
    double secs = seconds_since(t0);
    bool pass = violations == 0 && secs < 30.0;
    report(9, pass, secs,
           "hard <= soft + lambda log K on 2000 random policies: " +
               std::to_string(violations) + " violations, worst excess " + fmt(worst_excess));
  }

  // 10. Bytewise reproducibility of train and verify.
  {
    auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string note = "train and verify outputs bytewise identical across two runs";
    const fs::path work = fs::temp_directory_path() / "npgflow_acceptance";
    try {
      fs::remove_all(work);
      fs::create_directories(work);

      RunConfig c = default_run_config();
      c.env_path.clear();
      c.env_inline = nlohmann::ordered_json::parse(R"({
        "q_x": [1.0],
        "Q": [[0.9, 0.1]],
        "reward_law": {"kind": "bernoulli"},
        "behavior": {"kind": "uniform", "floor": 0.01}
      })");
      c.n_per_split = 300;
      c.seeds = {0, 1, 2};

      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
      };
      std::ostringstream sink;

      for (const char* cmd : {"train", "verify"}) {
        RunConfig c1 = c, c2 = c;
        c1.out_dir = (work / (std::string(cmd) + "_1")).string();
        c2.out_dir = (work / (std::string(cmd) + "_2")).string();
        if (std::string(cmd) == "train") {
          cmd_train(c1, sink);
          cmd_train(c2, sink);
          for (std::uint64_t s : c.seeds) {
            const std::string name = "train_seed" + std::to_string(s) + ".json";
            if (slurp(fs::path(c1.out_dir) / name) != slurp(fs::path(c2.out_dir) / name)) {
              pass = false;
              note = std::string("train output differs across runs: ") + name;
            }
          }
        } else {
          cmd_verify(c1, sink);
          cmd_verify(c2, sink);
          if (slurp(fs::path(c1.out_dir) / "theorem_report.csv") !=
              slurp(fs::path(c2.out_dir) / "theorem_report.csv")) {
            pass = false;
            note = "verify CSV differs across runs";
          }
        }
      }
      fs::remove_all(work);
    } catch (const std::exception& e) {
      pass = false;
      note = std::string("reproducibility check crashed: ") + e.what();
    }
    report(10, pass, seconds_since(t0), note);
  }

  std::printf("acceptance: %d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
