// xmopkit command-line front end.
//
//   xmopkit sample-robot        --family sawyer7 --seed 3 --out robot
//   xmopkit gen-demos           --n 200 --seed 1 --workers 8 --out demos.jsonl
//   xmopkit gen-collision-data  --demos demos.jsonl --seed 2 --out collision.jsonl
//   xmopkit train-toy           --demos demos.jsonl --epochs 50 --out toy.ckpt
//   xmopkit benchmark           --policy scripted-expert --n 20 --out metrics.csv
//
// Every subcommand takes --config FILE with a JSON object of flag values
// (long names without dashes); explicit flags win over the file.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "xmopkit/xmopkit.hpp"

namespace {

using namespace xmopkit;
using nlohmann::json;

constexpr int kUsageError = 1;
constexpr int kRuntimeFailure = 2;

// Fills options of `sub` that were not given on the command line from a
// flat JSON object keyed by long option name.
void merge_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    CLI::Option* opt = sub->get_option_no_throw("--" + it.key());
    if (opt == nullptr || it.key() == "config") {
      throw CLI::ConversionError("config key '" + it.key() + "' is not an option of " + sub->get_name());
    }
    if (opt->count() > 0) continue;
    const json& v = it.value();
    std::string text;
    if (v.is_boolean()) {
      text = v.get<bool>() ? "true" : "false";
    } else if (v.is_string()) {
      text = v.get<std::string>();
    } else if (v.is_number()) {
      text = v.dump();  // exact for 64-bit integers
    } else {
      throw CLI::ConversionError("config value for '" + it.key() + "' must be a scalar");
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_st("xmopkit");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("XMOPKIT_LOG")) {
    const std::string want = env;
    const auto level = spdlog::level::from_str(want);
    if (level == spdlog::level::off && want != "off") {
      spdlog::warn("XMOPKIT_LOG='{}' is not a log level; using info", want);
    } else {
      spdlog::set_level(level);
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  return out;
}

SceneConfig load_scene_config(const std::string& path, bool empty) {
  SceneConfig sc;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open scene config '" + path + "'");
    sc = scene_config_from_json(json::parse(in));
  }
  if (empty) sc.empty = true;
  return sc;
}

std::vector<Demonstration> load_demos(const std::string& path) {
  DemoDataset ds = read_demos(path);
  if (ds.records.empty()) throw InvalidArgument("'" + path + "' holds no demonstrations");
  return std::move(ds.records);
}

const std::map<std::string, Family> kFamilies{{"sawyer7", Family::Sawyer7}, {"ur6", Family::Ur6}};
const std::map<std::string, Strategy> kStrategies{{"normal", Strategy::Normal}, {"uniform", Strategy::Uniform}};

// ---------------------------------------------------------------------------

struct SampleRobotArgs {
  Family family = Family::Sawyer7;
  Strategy strategy = Strategy::Normal;
  std::uint64_t seed = 0;
  std::string out = "robot";
};

void run_sample_robot(const SampleRobotArgs& a) {
  const KinematicTemplate t = sample_template(a.family, a.strategy, a.seed);
  const RobotModel robot = compile_robot(t);
  const json cfg{{"family", to_string(a.family)}, {"strategy", to_string(a.strategy)}};
  const json meta = metadata_record("robot_template", cfg, a.seed);
  {
    std::ofstream out = open_out(a.out + ".json");
    out << json{{"metadata", meta}, {"template", template_to_json(t)}}.dump(2) << '\n';
  }
  {
    std::ofstream out = open_out(a.out + ".urdf");
    std::string urdf = export_urdf(robot, "xmopkit_" + to_string(a.family) + "_" + std::to_string(a.seed));
    // Metadata goes in a comment right after the XML declaration.
    const std::size_t decl = urdf.find("?>");
    const std::string comment = "\n<!-- " + meta.dump() + " -->";
    urdf.insert(decl == std::string::npos ? 0 : decl + 2, comment);
    out << urdf;
  }
  spdlog::info("wrote {0}.json and {0}.urdf ({1} dof)", a.out, robot.dof);
}

// ---------------------------------------------------------------------------

struct GenDemosArgs {
  std::size_t n = 10;
  Family family = Family::Sawyer7;
  Strategy strategy = Strategy::Normal;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string scene_config;
  bool empty = false;
  std::optional<std::uint64_t> robot_seed;
  bool timing = false;
  std::string out = "demos.jsonl";
  int planner_iterations = PlannerConfig{}.max_iterations;
};

GenDemosConfig demos_config(const GenDemosArgs& a) {
  GenDemosConfig cfg;
  cfg.n = a.n;
  cfg.family = a.family;
  cfg.strategy = a.strategy;
  cfg.scene = load_scene_config(a.scene_config, a.empty);
  cfg.master_seed = a.seed;
  cfg.workers = a.workers;
  cfg.robot_seed = a.robot_seed;
  cfg.record_timing = a.timing;
  cfg.planner.max_iterations = a.planner_iterations;
  return cfg;
}

void run_gen_demos(const GenDemosArgs& a) {
  const GenDemosConfig cfg = demos_config(a);
  spdlog::info("generating {} demonstrations with {} worker(s)", cfg.n, cfg.workers);
  const GenDemosResult res = gen_demos(cfg);
  std::ofstream out = open_out(a.out);
  write_demos(out, cfg, res);
  std::cout << "records " << res.records.size() << " failures " << res.failures << " partial "
            << (res.partial() ? "yes" : "no") << '\n';
  if (res.partial()) spdlog::warn("{} record index(es) produced no demonstration", res.missing);
}

// ---------------------------------------------------------------------------

struct CollisionArgs {
  std::string demos;
  std::uint64_t seed = 0;
  std::string out = "collision.jsonl";
};

void run_gen_collision(const CollisionArgs& a) {
  const std::vector<Demonstration> demos = load_demos(a.demos);
  const auto records = gen_collision_dataset(demos, a.seed);
  std::ofstream out = open_out(a.out);
  const json cfg{{"demos", a.demos}, {"demonstrations", demos.size()}};
  write_collision_dataset(out, records, cfg, a.seed);
  std::cout << "records " << records.size() << " positives " << records.size() / 2 << '\n';
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string demos;
  int epochs = TrainConfig{}.epochs;
  std::uint64_t seed = 0;
  double lr = TrainConfig{}.learning_rate;
  bool adam = false;
  int samples_per_record = TrainConfig{}.samples_per_record;
  std::string out = "toy.ckpt";
  std::string loss_csv;
};

void run_train(const TrainArgs& a) {
  const std::vector<Demonstration> demos = load_demos(a.demos);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.learning_rate = a.lr;
  cfg.adam = a.adam;
  cfg.samples_per_record = a.samples_per_record;
  spdlog::info("training on {} demonstrations for {} epochs", demos.size(), cfg.epochs);
  const TrainResult res = train_tiny(demos, cfg);
  json cj = cfg.to_json();
  cj["demos"] = a.demos;
  const json meta = metadata_record("tiny_denoiser", cj, a.seed);
  res.model.save(a.out, res.ema, {{"metadata", meta}});
  const std::string csv = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  std::ofstream out = open_out(csv);
  out << "# " << meta.dump() << '\n';
  write_loss_csv(out, res.curve);
  std::cout << "loss " << res.curve.front().mean_loss << " -> " << res.curve.back().smoothed_loss << " (ratio "
            << res.loss_ratio() << ")\n";
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string policy = "scripted-expert";
  std::string checkpoint;
  std::string weights = "ema";
  std::string problems;  // demonstration file; generated from the demo flags otherwise
  GenDemosArgs gen;
  std::uint64_t seed = 0;
  int batch = RolloutConfig{}.batch;
  bool timing = false;
  std::string out = "metrics.csv";
  std::string table;
};

std::vector<PlanningProblem> bench_problems(const BenchArgs& a) {
  if (!a.problems.empty()) {
    std::vector<PlanningProblem> ps;
    for (const auto& d : load_demos(a.problems)) ps.push_back(problem_from_demo(d));
    return ps;
  }
  return gen_problems(demos_config(a.gen));
}

void run_benchmark(const BenchArgs& a) {
  const std::vector<PlanningProblem> problems = bench_problems(a);
  if (problems.empty()) throw InvalidArgument("no benchmark problems");
  spdlog::info("benchmarking '{}' on {} problems", a.policy, problems.size());
  RolloutConfig rc;
  rc.batch = a.batch;
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();

  EvaluationReport rep;
  json cfg{{"policy", a.policy}, {"problems", problems.size()}, {"batch", rc.batch}};
  if (a.problems.empty()) {
    cfg["generated"] = demos_config(a.gen).to_json();
  } else {
    cfg["problems_file"] = a.problems;
  }
  if (a.policy == "classical") {
    rep = evaluate_classical(problems, PlannerConfig{}, a.seed);
  } else if (a.policy == "scripted-expert") {
    rep = evaluate(problems, [](const PlanningProblem& p, std::uint64_t s) { return scripted_expert(p, s); },
                   geometric_scorer(), rc, a.seed);
  } else {
    const auto ck = TinyDenoiser::read_checkpoint(a.checkpoint);
    TinyDenoiser model(TinyDenoiserDims::from_json(ck.header.at("dims")));
    model.set_parameters(a.weights == "ema" ? ck.ema : ck.parameters);
    cfg["checkpoint"] = a.checkpoint;
    cfg["weights"] = a.weights;
    rep = evaluate(problems,
                   [&](const PlanningProblem& p, std::uint64_t) -> std::optional<Policy> {
                     return denoiser_policy(p, model, sc);
                   },
                   geometric_scorer(), rc, a.seed);
  }
  std::ofstream out = open_out(a.out);
  out << "# " << metadata_record("metrics", cfg, a.seed).dump() << '\n';
  write_metrics_csv(out, rep, a.timing);
  // The 9D termination gate and the 1 cm / 5 deg success check can disagree.
  for (const auto& r : rep.rows) {
    if (r.outcome == "reached" && !r.success) {
      spdlog::warn("problem {}: reached the 9D goal gate but failed success check ({})", r.problem_id,
                   r.failure_reason);
    }
  }

  const auto pl = rep.path_length();
  const auto st = rep.solution_time();
  std::cout << "SR " << rep.success_rate() << "% (" << rep.successes() << "/" << rep.rows.size() << ")";
  if (pl) std::cout << " PL " << pl->mean << " +- " << pl->std;
  if (st && a.timing) std::cout << " ST " << st->mean << " +- " << st->std << " s";
  std::cout << '\n';
  if (!a.table.empty()) {
    std::ofstream t = open_out(a.table);
    t << "# " << metadata_record("summary", cfg, a.seed).dump() << '\n';
    t << "policy,problems,sr,pl_mean,pl_std,st_mean,st_std\n";
    auto opt = [&](const std::optional<MeanStd>& m, bool show) {
      return show && m ? std::to_string(m->mean) + "," + std::to_string(m->std) : std::string(",");
    };
    t << a.policy << ',' << rep.rows.size() << ',' << rep.success_rate() << ',' << opt(pl, true) << ','
      << opt(st, a.timing) << '\n';
  }
}

// ---------------------------------------------------------------------------

void add_demo_flags(CLI::App* sub, GenDemosArgs& g) {
  sub->add_option("--n", g.n, "number of problems")->check(CLI::PositiveNumber);
  sub->add_option("--family", g.family, "robot family")->transform(CLI::CheckedTransformer(kFamilies));
  sub->add_option("--strategy", g.strategy, "template sampling strategy")
      ->transform(CLI::CheckedTransformer(kStrategies));
  sub->add_option("--scene-config", g.scene_config, "JSON scene generator settings")->check(CLI::ExistingFile);
  sub->add_flag("--empty-scenes", g.empty, "obstacle-free scenes");
  sub->add_option("--robot-seed", g.robot_seed, "use one fixed embodiment");
  sub->add_option("--planner-iterations", g.planner_iterations, "planner tree-growth budget")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Cross-embodiment motion policy toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::map<CLI::App*, std::string> config_paths;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub], "JSON file of flag values; flags win")->check(CLI::ExistingFile);
  };

  SampleRobotArgs sr;
  CLI::App* s_robot = app.add_subcommand("sample-robot", "sample a kinematic template, write JSON and URDF");
  s_robot->add_option("--family", sr.family)->transform(CLI::CheckedTransformer(kFamilies));
  s_robot->add_option("--strategy", sr.strategy)->transform(CLI::CheckedTransformer(kStrategies));
  s_robot->add_option("--seed", sr.seed);
  s_robot->add_option("--out", sr.out, "output prefix");
  with_config(s_robot);

  GenDemosArgs gd;
  CLI::App* s_demos = app.add_subcommand("gen-demos", "generate planned demonstrations");
  add_demo_flags(s_demos, gd);
  s_demos->add_option("--seed", gd.seed, "master seed");
  s_demos->add_option("--workers", gd.workers)->check(CLI::Range(1u, 256u));
  s_demos->add_flag("--timing", gd.timing, "record planning times (output no longer reproducible)");
  s_demos->add_option("--out", gd.out);
  with_config(s_demos);

  CollisionArgs cd;
  CLI::App* s_coll = app.add_subcommand("gen-collision-data", "balanced collision records from demonstrations");
  s_coll->add_option("--demos", cd.demos, "demonstration file (required)");
  s_coll->add_option("--seed", cd.seed);
  s_coll->add_option("--out", cd.out);
  with_config(s_coll);

  TrainArgs tr;
  CLI::App* s_train = app.add_subcommand("train-toy", "train the tiny denoiser");
  s_train->add_option("--demos", tr.demos, "demonstration file (required)");
  s_train->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber);
  s_train->add_option("--seed", tr.seed);
  s_train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  s_train->add_flag("--adam", tr.adam, "Adam instead of plain SGD");
  s_train->add_option("--samples-per-record", tr.samples_per_record)->check(CLI::PositiveNumber);
  s_train->add_option("--out", tr.out, "checkpoint path");
  s_train->add_option("--loss-csv", tr.loss_csv, "defaults to <out>.loss.csv");
  with_config(s_train);

  BenchArgs bn;
  CLI::App* s_bench = app.add_subcommand("benchmark", "closed-loop evaluation, metrics CSV");
  s_bench->add_option("--policy", bn.policy)
      ->check(CLI::IsMember({"checkpoint", "scripted-expert", "classical"}));
  s_bench->add_option("--checkpoint", bn.checkpoint)->check(CLI::ExistingFile);
  s_bench->add_option("--weights", bn.weights)->check(CLI::IsMember({"ema", "raw"}));
  s_bench->add_option("--problems", bn.problems, "demonstration file to take problems from")
      ->check(CLI::ExistingFile);
  add_demo_flags(s_bench, bn.gen);
  s_bench->add_option("--problem-seed", bn.gen.seed, "master seed for generated problems");
  s_bench->add_option("--seed", bn.seed, "rollout seed");
  s_bench->add_option("--batch", bn.batch)->check(CLI::PositiveNumber);
  s_bench->add_flag("--timing", bn.timing, "write solution times (output no longer reproducible)");
  s_bench->add_option("--out", bn.out);
  s_bench->add_option("--table", bn.table, "SR/PL/ST summary CSV");
  with_config(s_bench);

  try {
    app.parse(argc, argv);
    for (auto& [sub, path] : config_paths) {
      if (sub->parsed() && !path.empty()) merge_config(sub, path);
    }
    // Checked after the merge so the config file can supply them.
    if ((s_coll->parsed() && cd.demos.empty()) || (s_train->parsed() && tr.demos.empty())) {
      throw CLI::RequiredError("--demos");
    }
    if (s_bench->parsed() && bn.policy == "checkpoint" && bn.checkpoint.empty()) {
      throw CLI::ValidationError("--checkpoint", "required with --policy checkpoint");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (s_robot->parsed()) run_sample_robot(sr);
    if (s_demos->parsed()) run_gen_demos(gd);
    if (s_coll->parsed()) run_gen_collision(cd);
    if (s_train->parsed()) run_train(tr);
    if (s_bench->parsed()) run_benchmark(bn);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeFailure;
  }
  return 0;
}
