// dtr1: command-line front end. Exit codes: 0 success, 1 validation failure,
// 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dtr1/eval.hpp"
#include "dtr1/metrics.hpp"
#include "dtr1/remote.hpp"
#include "dtr1/service.hpp"
#include "dtr1/synth.hpp"
#include "dtr1/toy.hpp"
#include "dtr1/wire.hpp"

namespace fs = std::filesystem;
using namespace dtr1;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string signed_num(double v) { return (v > 0 ? "+" : "") + num(v); }

ModelRegistry registry_from(const std::string& path) {
  if (path.empty()) return ModelRegistry::defaults();
  try {
    return ModelRegistry::load(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

json parse_error_json(const ParseError& e) {
  return {{"kind", parse_error_kind_name(e.kind)}, {"position", e.position}, {"detail", e.detail}};
}

// ---------------------------------------------------------------------------

struct Options {
  std::string format = "text";
  bool records() const { return format == "records"; }
};

int cmd_parse(const Options& o, const std::string& rollout, bool strict) {
  const auto text = read_file(rollout);
  const auto parsed = parse_rollout(text, strict ? ParseMode::Strict : ParseMode::NonStrict);
  std::optional<ParseError> err;
  if (!parsed) err = parsed.error();
  else if (auto v = validate_order(*parsed); !v.ok) err = v.first_violation;

  if (o.records()) {
    json j = {{"schema", kApiSchema}, {"ok", !err}};
    if (parsed) {
      json segs = json::array();
      for (const auto& s : parsed->segments) {
        segs.push_back({{"kind", tag_name(s.kind)},
                        {"start", s.span.start},
                        {"end", s.span.end},
                        {"system_inserted", s.origin == Origin::SystemInserted}});
      }
      j["segments"] = segs;
      j["iteration_count"] = parsed->iteration_count;
      j["truncated"] = parsed->terminal == Terminal::TokenLimitTruncated;
    }
    j["error"] = err ? parse_error_json(*err) : json(nullptr);
    std::cout << j.dump() << "\n";
  } else {
    if (parsed) {
      for (const auto& s : parsed->segments) {
        std::cout << tag_name(s.kind) << " [" << s.span.start << ", " << s.span.end << ")"
                  << (s.origin == Origin::SystemInserted ? " system" : "") << "\n";
      }
      std::cout << "iterations " << parsed->iteration_count << "\n";
    }
    std::cout << (err ? "invalid: " + err->describe() : std::string("valid")) << "\n";
  }
  return err ? kInvalid : kOk;
}

int cmd_validate_plan(const Options& o, const std::string& plan, const std::string& registry) {
  const auto reg = registry_from(registry);
  const auto v = validate_plan_text(read_file(plan), reg);
  if (o.records()) {
    std::cout << dag_verdict_to_json(v).dump() << "\n";
  } else {
    std::cout << "valid_format " << std::boolalpha << v.valid_format << "\nacyclic " << v.acyclic
              << "\nvalid_dependencies " << v.valid_dependencies << "\n";
    for (const auto& s : v.violations) std::cout << "violation: " << s << "\n";
    for (const auto& s : v.notes) std::cout << "note: " << s << "\n";
  }
  return v.all_ok() ? kOk : kInvalid;
}

struct ScoreArgs {
  std::string rollout, gt, registry, exec_mode = "any_failure", judge_url;
  double alpha = 1.0, beta = 1.0, iou_threshold = 0.5;
  bool execute = false;
};

int cmd_score(const Options& o, const ScoreArgs& a) {
  RewardConfig cfg;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.iou_threshold = a.iou_threshold;
  cfg.exec_penalty_mode = a.exec_mode == "per_block_sum" ? ExecPenaltyMode::PerBlockSum : ExecPenaltyMode::AnyFailure;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto text = read_file(a.rollout);
  GroundTruth gt;
  try {
    gt = load_ground_truth(a.gt);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const auto reg = registry_from(a.registry);
  ScoreDeps deps;
  deps.registry = &reg;
  const auto root = fs::path(a.rollout).parent_path();
  auto store = std::make_shared<FileMaskStore>(root.empty() ? fs::path(".") : root);
  deps.answer_masks = store;
  MockExecutor executor(store);
  if (a.execute) deps.executor = &executor;
  std::unique_ptr<JudgeClient> judge;
  if (!a.judge_url.empty()) {
    try {
      judge = std::make_unique<RemoteJudge>(a.judge_url);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    deps.judge = judge.get();
  }
  RewardBreakdown b;
  try {
    b = score(text, gt, cfg, deps);
  } catch (const JudgeTransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  if (o.records()) {
    std::cout << breakdown_to_text(b) << "\n";
  } else {
    std::cout << "total " << num(b.total) << "\n"
              << "r_token " << signed_num(b.r_token) << "\n"
              << "r_dag " << signed_num(b.r_dag) << "\n"
              << "r_exec " << signed_num(b.r_exec) << "\n"
              << "r_task " << signed_num(b.r_task) << "\n"
              << "r_result " << signed_num(b.r_result) << "\n"
              << "r_format " << signed_num(b.r_format) << "\n"
              << "r_accuracy " << signed_num(b.r_accuracy) << "\n";
    for (const auto& d : b.diagnostics) std::cout << "note: " << d << "\n";
  }
  return kOk;
}

int cmd_mask(const Options& o, const std::string& rollout) {
  const auto text = read_file(rollout);
  auto seq = parse_rollout(text, ParseMode::NonStrict);
  if (!seq) seq = scan_segments(text);
  if (!seq) {
    std::cerr << "error: " << seq.error().describe() << "\n";
    return kInvalid;
  }
  const auto m = training_mask(*seq);
  if (o.records()) {
    for (const auto& s : m.spans) {
      std::cout << json{{"schema", kApiSchema}, {"start", s.start}, {"end", s.end}, {"trainable", s.trainable}}.dump()
                << "\n";
    }
  } else {
    for (const auto& s : m.spans) {
      std::cout << "[" << s.start << ", " << s.end << ") " << (s.trainable ? "trainable" : "masked") << "\n";
    }
    std::cout << "masked characters " << m.masked_chars() << " of " << text.size() << "\n";
  }
  return kOk;
}

void print_metrics(const MetricReport& m) {
  std::cout << "J " << num(m.j_mean) << "\nF " << num(m.f_mean) << "\ngIoU " << num(m.giou) << "\ncIoU " << num(m.ciou)
            << "\n";
}

int cmd_metrics(const Options& o, const std::string& pred, const std::string& gt, const std::string& dataset,
                bool boxes, std::optional<int> radius) {
  if (!dataset.empty()) {
    EvalReport r;
    try {
      r = run_eval(dataset);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (o.records()) {
      std::cout << eval_report_to_text(r) << "\n";
    } else {
      std::cout << "samples " << r.samples << "\npairs " << r.pairs << "\n";
      if (r.overall) print_metrics(*r.overall);
      for (const auto& g : r.by_difficulty) {
        std::cout << "difficulty " << g.key << ": gIoU " << num(g.metrics.giou) << " cIoU " << num(g.metrics.ciou) << "\n";
      }
      for (const auto& g : r.by_category) {
        std::cout << "category " << g.key << ": gIoU " << num(g.metrics.giou) << " cIoU " << num(g.metrics.ciou) << "\n";
      }
      if (r.rewards) {
        std::cout << "rewards: mean " << num(r.rewards->mean_total) << " format rate " << num(r.rewards->format_rate)
                  << "\n";
      }
      for (const auto& f : r.missing_files) std::cout << "missing: " << f << "\n";
    }
    return r.complete() ? kOk : kInvalid;
  }
  if (pred.empty() || gt.empty()) throw UsageError("metrics needs --pred and --gt, or --dataset");
  MetricReport m;
  try {
    if (boxes) {
      m = aggregate(std::vector<BoxPair>{{read_box_file(pred), read_box_file(gt)}}, radius);
    } else {
      m = aggregate(std::vector<MaskPair>{{read_mask_file(pred), read_mask_file(gt)}}, radius);
    }
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (o.records()) {
    std::cout << json{{"schema", kEvalSchema}, {"j_mean", m.j_mean}, {"f_mean", m.f_mean}, {"giou", m.giou}, {"ciou", m.ciou}}
                     .dump()
              << "\n";
  } else {
    print_metrics(m);
  }
  return kOk;
}

int cmd_gen_fixtures(const Options& o, std::uint64_t seed, std::size_t count, const std::string& difficulty,
                     const std::string& out) {
  std::vector<SyntheticTask> tasks;
  try {
    tasks = generate_tasks(seed, count, DifficultyMix::parse(difficulty));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_fixtures(tasks, out);
  if (o.records()) {
    for (const auto& t : tasks) {
      std::cout << json{{"schema", kApiSchema},
                        {"task_id", t.task_id},
                        {"difficulty", difficulty_name(t.difficulty)},
                        {"task_type", task_type_name(t.ground_truth.task_type)},
                        {"query", t.query}}
                       .dump()
                << "\n";
    }
  } else {
    std::cout << "wrote " << tasks.size() << " tasks to " << out << "\n";
  }
  return kOk;
}

void print_curve_summary(const std::vector<CurvePoint>& curve) {
  const std::size_t w = std::min<std::size_t>(20, curve.size());
  const double first = window_mean(curve, 0, w);
  const double last = window_mean(curve, curve.size() - w, w);
  std::cout << "iterations " << curve.size() << "\n"
            << "first " << w << " mean reward " << num(first) << "\n"
            << "last " << w << " mean reward " << num(last) << "\n"
            << "gain " << num(last - first) << "\n"
            << "final format rate " << num(window_mean(curve, curve.size() - w, w, &CurvePoint::format_rate)) << "\n"
            << "final answer accuracy " << num(window_mean(curve, curve.size() - w, w, &CurvePoint::answer_accuracy))
            << "\n";
}

int cmd_simulate_train(const Options& o, const TrainConfig& cfg, const std::string& out) {
  TrainResult r;
  try {
    r = simulate_training(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto records = curve_to_records(r.curve);
  if (!out.empty()) write_file(out, records);
  if (o.records()) {
    std::cout << records;
  } else {
    print_curve_summary(r.curve);
    if (!out.empty()) std::cout << "curve written to " << out << "\n";
  }
  return kOk;
}

int cmd_report(const Options& o, const std::string& curve_path) {
  std::vector<CurvePoint> curve;
  try {
    curve = curve_from_records(read_file(curve_path));
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  if (curve.empty()) throw UsageError("curve file has no records");
  if (o.records()) {
    const std::size_t w = std::min<std::size_t>(20, curve.size());
    std::cout << json{{"schema", kCurveSchema},
                      {"iterations", curve.size()},
                      {"first_mean_reward", window_mean(curve, 0, w)},
                      {"last_mean_reward", window_mean(curve, curve.size() - w, w)},
                      {"final_format_rate", window_mean(curve, curve.size() - w, w, &CurvePoint::format_rate)}}
                     .dump()
              << "\n";
  } else {
    print_curve_summary(curve);
  }
  return kOk;
}

int cmd_serve(const std::string& config, const std::string& listen) {
  ServiceConfig cfg;
  try {
    cfg = ServiceConfig::load(config.empty() ? std::nullopt : std::optional<fs::path>(config));
    if (!listen.empty()) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw std::invalid_argument("--listen must be host:port");
      cfg.host = listen.substr(0, colon);
      cfg.port = std::stoi(listen.substr(colon + 1));
    }
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  ScoringServer server(cfg);
  const int port = server.bind();
  std::cout << "listening on " << cfg.host << ":" << port << std::endl;
  server.serve();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dtr1: rollout grammar, plan validation, reward scoring and toy GRPO training"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"text", "records"}));

  std::string rollout, plan, registry, pred, gt, dataset, out, curve, config, listen, difficulty = "all";
  bool strict = false, boxes = false;
  std::optional<int> radius;

  auto* parse = app.add_subcommand("parse", "Parse a rollout and check its tag order");
  parse->add_option("--rollout", rollout, "Rollout text file")->required();
  parse->add_flag("--strict", strict, "Reject text outside segments");

  auto* vplan = app.add_subcommand("validate-plan", "Validate a DAG plan against the model registry");
  vplan->add_option("--plan", plan, "Plan text file")->required();
  vplan->add_option("--registry", registry, "Registry JSON file");

  ScoreArgs sa;
  auto* sc = app.add_subcommand("score", "Score a rollout against ground truth");
  sc->add_option("--rollout", sa.rollout, "Rollout text file")->required();
  sc->add_option("--gt", sa.gt, "Ground-truth directory or manifest")->required();
  sc->add_option("--alpha", sa.alpha, "Format weight");
  sc->add_option("--beta", sa.beta, "Accuracy weight");
  sc->add_option("--iou-threshold", sa.iou_threshold, "Correct iff IoU exceeds this");
  sc->add_option("--exec-mode", sa.exec_mode, "Execution penalty mode")
      ->check(CLI::IsMember({"any_failure", "per_block_sum"}));
  sc->add_option("--registry", sa.registry, "Registry JSON file");
  sc->add_flag("--execute", sa.execute, "Re-run execute blocks with the mock executor instead of reading results");
  sc->add_option("--judge-url", sa.judge_url, "Remote judge endpoint");

  auto* mk = app.add_subcommand("mask", "Print the training mask of a rollout");
  mk->add_option("--rollout", rollout, "Rollout text file")->required();

  auto* met = app.add_subcommand("metrics", "Mask/box metrics for one pair or a dataset directory");
  met->add_option("--pred", pred, "Predicted mask or box file");
  met->add_option("--gt", gt, "Ground-truth mask or box file");
  met->add_option("--dataset", dataset, "Evaluation dataset directory");
  met->add_flag("--boxes", boxes, "Inputs are box files");
  met->add_option("--radius", radius, "Boundary tolerance in pixels");

  std::uint64_t seed = 1;
  std::size_t count = 16;
  auto* gen = app.add_subcommand("gen-fixtures", "Generate synthetic tasks with oracle rollouts");
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--count", count, "Number of tasks");
  gen->add_option("--difficulty", difficulty, "L1..L4, comma separated, or all");
  gen->add_option("--out", out, "Output directory")->required();

  TrainConfig tc;
  bool no_format = false, no_result = false;
  auto* train = app.add_subcommand("simulate-train", "Train the toy policy with group-relative advantages");
  train->add_option("--seed", tc.seed, "Random seed");
  train->add_option("--iterations", tc.iterations, "Training iterations");
  train->add_option("--group-size", tc.group_size, "Rollouts per group");
  train->add_option("--lr", tc.lr, "Learning rate");
  train->add_option("--tasks", tc.task_count, "Number of synthetic tasks");
  train->add_flag("--no-format-reward", no_format, "Train without the format reward");
  train->add_flag("--no-result-reward", no_result, "Train without the answer reward");
  train->add_option("--out", out, "Curve output file");

  auto* rep = app.add_subcommand("report", "Summarise a training curve file");
  rep->add_option("--curve", curve, "Curve records file")->required();

  auto* srv = app.add_subcommand("serve", "Run the scoring service");
  srv->add_option("--config", config, "Service config JSON file");
  srv->add_option("--listen", listen, "host:port");
  srv->add_option("--registry", registry, "Registry JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*parse) return cmd_parse(opt, rollout, strict);
    if (*vplan) return cmd_validate_plan(opt, plan, registry);
    if (*sc) return cmd_score(opt, sa);
    if (*mk) return cmd_mask(opt, rollout);
    if (*met) return cmd_metrics(opt, pred, gt, dataset, boxes, radius);
    if (*gen) return cmd_gen_fixtures(opt, seed, count, difficulty, out);
    if (*train) {
      tc.format_reward = !no_format;
      tc.result_reward = !no_result;
      return cmd_simulate_train(opt, tc, out);
    }
    if (*rep) return cmd_report(opt, curve);
    if (*srv) {
      if (!registry.empty()) setenv("DTR1_REGISTRY", registry.c_str(), 1);
      return cmd_serve(config, listen);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kUsage;
}
