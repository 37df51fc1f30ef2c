#include "dtr1/toy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dtr1 {

namespace {

template <typename Logits>
std::vector<double> softmax(const Logits& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p;
  double z = 0.0;
  for (double l : logits) {
    p.push_back(std::exp(l - mx));
    z += p.back();
  }
  for (double& v : p) v /= z;
  return p;
}

template <typename Logits>
std::size_t draw(const Logits& logits, std::mt19937_64& rng) {
  const auto p = softmax(logits);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

template <typename Logits>
std::size_t argmax(const Logits& logits) {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <typename Logits>
void reinforce(Logits& logits, const std::vector<double>& p, std::size_t taken, double step) {
  for (std::size_t b = 0; b < p.size(); ++b) logits[b] += b == taken ? step * (1.0 - p[b]) : -step * p[b];
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_index(const ToyPolicy& policy, std::size_t task_index, const SyntheticTask* task) {
  if (task_index >= policy.task_logits.size() || task_index >= policy.answer_logits.size()) {
    throw std::invalid_argument("task index outside the policy tables");
  }
  if (task && policy.answer_logits[task_index].size() != task->answer_candidates.size()) {
    throw std::invalid_argument("answer table does not match the task's candidates");
  }
}

}  // namespace

ToyPolicy ToyPolicy::uniform(const std::vector<SyntheticTask>& tasks) {
  ToyPolicy p;
  p.task_logits.resize(tasks.size());
  for (const auto& t : tasks) p.answer_logits.emplace_back(t.answer_candidates.size(), 0.0);
  return p;
}

RolloutKnobs knobs_for(const ToyActions& a) {
  RolloutKnobs k;
  k.format = static_cast<FormatAction>(a.format);
  k.plan = static_cast<PlanChoice>(a.plan);
  k.buggy_code = a.code == 1;
  k.task_label = a.task;
  k.answer = a.answer;
  return k;
}

ToySample toy_sample(const ToyPolicy& policy, std::size_t task_index, const SyntheticTask& task, std::uint64_t seed) {
  check_index(policy, task_index, &task);
  std::mt19937_64 rng(seed);
  ToyActions a;
  a.format = draw(policy.format_logits, rng);
  a.plan = draw(policy.plan_logits, rng);
  a.code = draw(policy.code_logits, rng);
  a.task = draw(policy.task_logits[task_index], rng);
  a.answer = draw(policy.answer_logits[task_index], rng);
  return {write_rollout(task, knobs_for(a)), a};
}

ToySample toy_greedy(const ToyPolicy& policy, std::size_t task_index, const SyntheticTask& task) {
  check_index(policy, task_index, &task);
  ToyActions a;
  a.format = argmax(policy.format_logits);
  a.plan = argmax(policy.plan_logits);
  a.code = argmax(policy.code_logits);
  a.task = argmax(policy.task_logits[task_index]);
  a.answer = argmax(policy.answer_logits[task_index]);
  return {write_rollout(task, knobs_for(a)), a};
}

ToyPolicy toy_update(const ToyPolicy& policy, std::size_t task_index, const std::vector<ToyActions>& actions,
                     const AdvantageVector& advantages, double lr) {
  check_index(policy, task_index, nullptr);
  if (actions.size() != advantages.values.size()) {
    throw std::invalid_argument("group has " + std::to_string(actions.size()) + " rollouts but " +
                                std::to_string(advantages.values.size()) + " advantages");
  }
  ToyPolicy next = policy;
  const auto pf = softmax(policy.format_logits);
  const auto pp = softmax(policy.plan_logits);
  const auto pc = softmax(policy.code_logits);
  const auto pt = softmax(policy.task_logits[task_index]);
  const auto pa = softmax(policy.answer_logits[task_index]);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double step = lr * advantages.values[i];
    if (step == 0.0) continue;
    const auto& a = actions[i];
    if (a.answer >= pa.size() || a.format >= pf.size() || a.plan >= pp.size() || a.code >= pc.size() ||
        a.task >= pt.size()) {
      throw std::invalid_argument("action outside its slot");
    }
    reinforce(next.format_logits, pf, a.format, step);
    reinforce(next.plan_logits, pp, a.plan, step);
    reinforce(next.code_logits, pc, a.code, step);
    reinforce(next.task_logits[task_index], pt, a.task, step);
    reinforce(next.answer_logits[task_index], pa, a.answer, step);
  }
  return next;
}

TrainResult simulate_training(const TrainConfig& cfg) {
  if (cfg.group_size < 2) throw std::invalid_argument("group size must be at least 2");
  if (cfg.iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (!std::isfinite(cfg.lr) || cfg.lr < 0) throw std::invalid_argument("learning rate must be finite and >= 0");

  TrainResult result;
  result.tasks = generate_tasks(cfg.seed, std::max<std::size_t>(cfg.task_count, 1), cfg.mix);
  result.policy = ToyPolicy::uniform(result.tasks);
  const RewardConfig reward_cfg;

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto ti = static_cast<std::size_t>(it) % result.tasks.size();
    const auto& task = result.tasks[ti];
    ScoreDeps deps;
    deps.answer_masks = task.masks;

    std::vector<ToyActions> actions;
    std::vector<double> full, train;
    std::size_t well_formed = 0, correct = 0;
    for (std::size_t g = 0; g < cfg.group_size; ++g) {
      const auto seed = splitmix(cfg.seed ^ splitmix((static_cast<std::uint64_t>(it) << 20) + g));
      const auto sample = toy_sample(result.policy, ti, task, seed);
      const auto b = score(sample.text, task.ground_truth, reward_cfg, deps);
      actions.push_back(sample.actions);
      full.push_back(b.total);
      train.push_back((cfg.format_reward ? b.r_format : 0.0) + b.r_exec + b.r_task +
                      (cfg.result_reward ? b.r_result : 0.0));
      well_formed += b.r_token > 0;
      correct += b.r_result > 0;
    }

    CurvePoint pt;
    pt.iteration = it;
    const auto n = static_cast<double>(cfg.group_size);
    for (double r : full) pt.mean_reward += r / n;
    for (double r : full) pt.std_reward += (r - pt.mean_reward) * (r - pt.mean_reward) / n;
    pt.std_reward = std::sqrt(pt.std_reward);
    pt.format_rate = static_cast<double>(well_formed) / n;
    pt.answer_accuracy = static_cast<double>(correct) / n;
    result.curve.push_back(pt);

    result.policy = toy_update(result.policy, ti, actions, group_advantages(train), cfg.lr);
  }
  return result;
}

double window_mean(const std::vector<CurvePoint>& curve, std::size_t first, std::size_t n,
                   double CurvePoint::*field) {
  if (n == 0 || first + n > curve.size()) throw std::invalid_argument("window outside the curve");
  double s = 0.0;
  for (std::size_t i = first; i < first + n; ++i) s += curve[i].*field;
  return s / static_cast<double>(n);
}

std::string curve_to_records(const std::vector<CurvePoint>& curve) {
  std::string out;
  for (const auto& p : curve) {
    nlohmann::json j = {{"schema", kCurveSchema},         {"iteration", p.iteration},
                        {"mean_reward", p.mean_reward},   {"std_reward", p.std_reward},
                        {"format_rate", p.format_rate},   {"answer_accuracy", p.answer_accuracy}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<CurvePoint> curve_from_records(std::string_view text) {
  std::vector<CurvePoint> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw SchemaError(where, "not a JSON record");
    }
    if (!j.is_object() || j.value("schema", std::string()) != kCurveSchema) {
      throw SchemaError(where + ".schema", "expected dtr1-curve/1");
    }
    auto num = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_number()) throw SchemaError(where + "." + key, "expected number");
      return j[key].get<double>();
    };
    CurvePoint p;
    if (!j.contains("iteration") || !j["iteration"].is_number_integer()) {
      throw SchemaError(where + ".iteration", "expected integer");
    }
    p.iteration = j["iteration"].get<int>();
    p.mean_reward = num("mean_reward");
    p.std_reward = num("std_reward");
    p.format_rate = num("format_rate");
    p.answer_accuracy = num("answer_accuracy");
    out.push_back(p);
  }
  return out;
}

}  // namespace dtr1
