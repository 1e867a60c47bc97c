// Command-line front end: train / eval / render / bench.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shepherd/config.hpp"
#include "shepherd/experiments.hpp"
#include "shepherd/svg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  shepherd::RunConfig resolve() const {
    shepherd::RunConfig cfg = config_path.empty() ? shepherd::RunConfig{}
                                                  : shepherd::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.output_dir = *out_dir;
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (defaults when omitted)");
  cmd->add_option("--seed", args.seed, "master seed override");
  cmd->add_option("--out", args.out_dir, "output directory override");
}

int run_train(const CommonArgs& common, std::optional<std::int64_t> episodes) {
  shepherd::RunConfig cfg = common.resolve();
  if (episodes) cfg.ppo.total_episodes = *episodes;
  const auto artifacts = shepherd::run_training(cfg);
  try {
    shepherd::svg::render_reward_curve(artifacts.reward_curve_csv,
                                       std::filesystem::path(cfg.output_dir) / "figures" /
                                           "reward_curve.svg");
  } catch (const shepherd::IoError&) {
    // zero-episode runs have no curve to draw
  }
  std::cout << "trained " << artifacts.result.episodes_completed << " episodes ("
            << artifacts.result.env_steps << " env steps, " << artifacts.result.updates
            << " updates)\nweights: " << artifacts.weights.string() << "\n";
  return kExitOk;
}

int run_eval_cmd(const CommonArgs& common, const std::string& strategy,
                 const std::string& policy_path, std::optional<std::int64_t> episodes,
                 const std::string& scenario, bool keep_trajectories, int threads) {
  shepherd::RunConfig cfg = common.resolve();
  if (!strategy.empty()) cfg.strategy = shepherd::strategy_from_string(strategy);
  if (!policy_path.empty()) cfg.policy_path = policy_path;
  if (episodes) cfg.episodes = *episodes;
  if (!scenario.empty() && scenario != "custom") {
    cfg.scenario = shepherd::scenario_preset(scenario);
    cfg.eval_cap_steps = shepherd::default_eval_cap(cfg.scenario);
  }

  shepherd::GaussianPolicy policy;
  const shepherd::GaussianPolicy* policy_ptr = nullptr;
  if (cfg.strategy == shepherd::Strategy::kPpo) {
    if (!cfg.policy_path)
      throw shepherd::ConfigError("eval with strategy=ppo needs --policy or policy_path");
    policy = shepherd::load_driving_policy(*cfg.policy_path);
    policy_ptr = &policy;
  }

  const auto result = shepherd::run_eval(cfg, policy_ptr, threads, keep_trajectories);
  std::cout << "episodes: " << result.summary.episodes
            << "\nsuccess rate: " << result.summary.success_rate << "\n";
  if (result.summary.gathering_mean_steps) {
    std::cout << "gathering time: " << *result.summary.gathering_mean_steps << " +/- "
              << *result.summary.gathering_std_steps << " steps\n";
  }
  std::cout << "path length: " << result.summary.path_length_mean << " +/- "
            << result.summary.path_length_std << "\n";
  if (cfg.scenario.herders == 1 && cfg.scenario.targets == 1) {
    std::cout << "reference single-agent success rates: heuristic baseline 96.5%, "
                 "learned policy 99.3%\n";
  }
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return kExitOk;
}

int run_render(const std::string& run_dir) {
  const auto produced = shepherd::svg::render_figures(run_dir);
  for (const auto& p : produced) std::cout << p.string() << "\n";
  return kExitOk;
}

int run_bench(const CommonArgs& common, const std::string& policy_path,
              std::int64_t calls) {
  shepherd::RunConfig cfg = common.resolve();
  if (!policy_path.empty()) cfg.policy_path = policy_path;
  if (!cfg.policy_path)
    throw shepherd::ConfigError("bench needs --policy or policy_path in the config");
  const shepherd::GaussianPolicy policy = shepherd::load_driving_policy(*cfg.policy_path);
  const auto report = shepherd::benchmark_inference(policy, calls);
  std::cout << "policy inference over " << report.calls << " calls: " << report.mean_ms
            << " +/- " << report.std_ms << " ms per call\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized shepherding simulator and trainer"};
  app.require_subcommand(1);

  CommonArgs train_args;
  std::optional<std::int64_t> train_episodes;
  CLI::App* train = app.add_subcommand("train", "train the driving policy with PPO");
  add_common(train, train_args);
  train->add_option("--episodes", train_episodes, "override ppo.total_episodes");

  CommonArgs eval_args;
  std::string eval_strategy;
  std::string eval_policy;
  std::optional<std::int64_t> eval_episodes;
  std::string eval_scenario;
  bool keep_trajectories = false;
  int eval_threads = 0;
  CLI::App* eval = app.add_subcommand("eval", "run evaluation episodes");
  add_common(eval, eval_args);
  eval->add_option("--strategy", eval_strategy, "ppo or vortex")
      ->check(CLI::IsMember({"ppo", "vortex"}));
  eval->add_option("--policy", eval_policy, "weights file for strategy=ppo");
  eval->add_option("--episodes", eval_episodes, "number of evaluation episodes");
  eval->add_option("--scenario", eval_scenario, "1h1t, 10h100t or custom")
      ->check(CLI::IsMember({"1h1t", "10h100t", "custom"}));
  eval->add_flag("--keep-trajectories", keep_trajectories,
                 "write per-episode trajectory CSVs");
  eval->add_option("--threads", eval_threads, "worker count (0 = SHEPHERD_THREADS/auto)");

  std::string render_dir;
  CLI::App* render = app.add_subcommand("render", "emit SVG figures for a run directory");
  render->add_option("--run", render_dir, "run directory with artifacts")->required();

  CommonArgs bench_args;
  std::string bench_policy;
  std::int64_t bench_calls = 100000;
  CLI::App* bench = app.add_subcommand("bench", "measure policy inference latency");
  add_common(bench, bench_args);
  bench->add_option("--policy", bench_policy, "weights file");
  bench->add_option("--calls", bench_calls, "number of timed calls");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) return run_train(train_args, train_episodes);
    if (eval->parsed())
      return run_eval_cmd(eval_args, eval_strategy, eval_policy, eval_episodes,
                          eval_scenario, keep_trajectories, eval_threads);
    if (render->parsed()) return run_render(render_dir);
    if (bench->parsed()) return run_bench(bench_args, bench_policy, bench_calls);
  } catch (const shepherd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const shepherd::InfeasibleError& e) {
    std::cerr << "infeasible scenario: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const shepherd::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const shepherd::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
