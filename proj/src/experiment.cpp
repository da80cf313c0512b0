#include "fugsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fugsim/random.hpp"

namespace fugsim::experiment {

namespace {
enum Tag : std::uint64_t {
  kTagProcess = 201,
  kTagSplit = 202,
};
}  // namespace

std::vector<traffic::BackgroundProcess> sample_processes(
    int process_count, double area_side_m, const ProcessRanges& ranges,
    std::uint64_t seed) {
  std::vector<traffic::BackgroundProcess> out;
  out.reserve(process_count);
  for (int m = 0; m < process_count; ++m) {
    auto u = [&](int what) {
      return rng::keyed_uniform(seed, kTagProcess, m, what);
    };
    traffic::BackgroundProcess p;
    p.mu_x = u(0) * area_side_m;
    p.mu_y = u(1) * area_side_m;
    p.sigma_x = ranges.sigma_min + u(2) * (ranges.sigma_max - ranges.sigma_min);
    p.sigma_y = ranges.sigma_min + u(3) * (ranges.sigma_max - ranges.sigma_min);
    p.t_start = ranges.start_min + u(4) * (ranges.start_max - ranges.start_min);
    p.duration =
        ranges.duration_min + u(5) * (ranges.duration_max - ranges.duration_min);
    out.push_back(p);
  }
  return out;
}

traffic::TrafficConfig make_traffic_config(const ExperimentConfig& config,
                                           std::uint64_t seed) {
  traffic::TrafficConfig tc = config.traffic;
  tc.seed = seed;
  tc.processes = sample_processes(config.process_count, tc.area_side_m,
                                  config.ranges, seed);
  return tc;
}

std::vector<svm::LabeledPoint> device_dataset(
    const traffic::TrafficTrace& trace) {
  std::vector<svm::LabeledPoint> points;
  points.reserve(trace.devices.size());
  for (const auto& dev : trace.devices)
    points.push_back(
        {{dev.x, dev.y},
         dev.class_label == traffic::ClassLabel::coordinated ? 1 : -1});
  return points;
}

ClassifierResult train_classifier(const traffic::TrafficTrace& trace,
                                  const ClassifierConfig& config) {
  std::vector<svm::LabeledPoint> points = device_dataset(trace);

  // Seeded shuffle, then a contiguous train/test split.
  rng::SplitMix64 gen(rng::mix64(config.seed ^ kTagSplit));
  for (std::size_t i = points.size(); i > 1; --i)
    std::swap(points[i - 1], points[gen() % i]);
  const std::size_t train_count = static_cast<std::size_t>(
      std::llround(config.train_fraction * points.size()));
  std::vector<svm::LabeledPoint> train(points.begin(),
                                       points.begin() + train_count);
  std::vector<svm::LabeledPoint> test(points.begin() + train_count,
                                      points.end());

  train = svm::undersample_majority(train, config.balance_ratio,
                                    rng::mix64(config.seed + 17));

  ClassifierResult result;
  result.scaler = svm::Scaler::fit(train);
  for (auto& p : train) p.x = result.scaler.apply(p.x);

  svm::SmoParams params;
  params.c = config.c;
  params.tol = config.tol;
  params.max_passes = config.max_passes;
  params.seed = config.seed;

  const auto t0 = std::chrono::steady_clock::now();
  result.model = svm::train_smo(train, config.kernel, params);
  const auto t1 = std::chrono::steady_clock::now();
  result.train_seconds =
      std::chrono::duration<double>(t1 - t0).count();
  result.train_size = static_cast<long>(train.size());
  result.test_size = static_cast<long>(test.size());

  for (const auto& p : test) {
    const int predicted =
        svm::classify(result.model, result.scaler.apply(p.x));
    result.test_confusion.add(p.label == 1 ? 1 : 0, predicted == 1 ? 1 : 0);
  }
  result.test_report = metrics::classification_report(result.test_confusion);
  return result;
}

std::vector<std::uint8_t> classify_devices(
    const svm::SvmModel& model, const svm::Scaler& scaler,
    const traffic::TrafficTrace& trace) {
  std::vector<std::uint8_t> out(trace.devices.size(), 0);
  for (std::size_t d = 0; d < trace.devices.size(); ++d) {
    const auto& dev = trace.devices[d];
    out[d] = svm::classify(model, scaler.apply({dev.x, dev.y})) == 1 ? 1 : 0;
  }
  return out;
}

SeedRunResult run_seed(const ExperimentConfig& config, std::uint64_t seed,
                       const std::string& log_dir) {
  SeedRunResult result;
  result.seed = seed;

  const traffic::TrafficConfig tc = make_traffic_config(config, seed);
  const traffic::TrafficTrace trace = traffic::simulate(tc);

  std::vector<std::uint8_t> priorities;
  if (config.sweep.use_classifier_priorities) {
    ClassifierResult classifier =
        train_classifier(trace, config.classifier);
    priorities = classify_devices(classifier.model, classifier.scaler, trace);
  }

  const sched::Predictions genie_feed = sched::perfect_predictions(trace);
  const sched::Predictions fug_feed = sched::noisy_oracle(
      trace, config.sweep.oracle, priorities, rng::mix64(seed + 41));

  for (sched::Policy policy : config.sweep.policies) {
    for (int r : config.sweep.resource_counts) {
      sched::SchedulerConfig sc = config.scheduler;
      sc.policy = policy;
      sc.resources = r;
      sc.seed = rng::keyed_bits(seed, static_cast<std::uint64_t>(policy),
                                static_cast<std::uint64_t>(r), 97);
      const sched::Predictions& feed =
          policy == sched::Policy::fug ? fug_feed : genie_feed;
      sched::AllocationLog log = sched::run_policy(trace, feed, sc);

      SweepRow row;
      row.summary = sched::summarize(log);
      row.summary.seed = seed;  // report the sweep seed, not the derived one
      row.margin_waits = log.margin_waits;
      row.exploration_grants = log.exploration_grants;
      row.corrections = log.corrections;
      result.rows.push_back(row);

      if (!log_dir.empty()) {
        const std::string base = log_dir + "/" +
                                 sched::to_string(policy) + "_r" +
                                 std::to_string(r) + "_s" +
                                 std::to_string(seed);
        std::ofstream events(base + "_events.csv");
        sched::write_events_csv(log, events);
        std::ofstream packets(base + "_packets.csv");
        sched::write_packets_csv(log, packets);
      }
    }
  }
  return result;
}

void write_summary_header(std::ostream& out) {
  out << "policy,resources,seed,total_bytes,mean_delay_ms,max_delay_ms,"
         "collisions,delivered_packets,stranded_packets,margin_waits,"
         "exploration_grants,corrections\n";
}

void write_summary_row(const SweepRow& row, std::ostream& out) {
  const auto& s = row.summary;
  out << sched::to_string(s.policy) << ',' << s.resources << ',' << s.seed
      << ',' << s.total_bytes << ',' << s.mean_delay_ms << ','
      << s.max_delay_ms << ',' << s.collisions << ','
      << s.delivered_packets << ',' << s.stranded_packets << ','
      << row.margin_waits << ',' << row.exploration_grants << ','
      << row.corrections << '\n';
}

PhaseWindows phase_windows(const traffic::TrafficConfig& config) {
  const int slots = config.slot_count();
  PhaseWindows w;
  double first_start = config.run_time_s;
  double last_end = 0.0;
  for (const auto& p : config.processes) {
    first_start = std::min(first_start, p.t_start);
    last_end = std::max(last_end, p.t_start + p.duration);
  }
  if (config.processes.empty()) {
    first_start = config.run_time_s * 0.5;
    last_end = config.run_time_s * 0.75;
  }
  const auto slot_of = [&](double t) {
    return std::clamp(static_cast<int>(t / config.slot_duration_s), 0,
                      slots);
  };
  w.data_begin = 1;
  w.data_end = slot_of(first_start);
  w.alarm_begin = slot_of(first_start);
  w.alarm_end = slot_of(last_end);
  w.silent_begin = slot_of(last_end);
  w.silent_end = slots;
  return w;
}

void write_phase_csv(const traffic::TrafficTrace& trace, int begin_slot,
                     int end_slot, bool startup, std::ostream& out) {
  out << "device_id,x,y,status\n";
  const int slots = trace.config.slot_count();
  begin_slot = std::clamp(begin_slot, 0, slots);
  end_slot = std::clamp(end_slot, begin_slot, slots);

  // Per-device status over the window: alarm if it spent any slot in the
  // alarm state, data if it transmitted, silent otherwise.
  std::vector<std::uint8_t> status(trace.devices.size(), 0);
  if (startup) {
    for (auto& s : status) s = 1;
  } else {
    for (const auto& a : trace.arrivals) {
      if (a.slot < begin_slot || a.slot >= end_slot) continue;
      auto& s = status[a.device];
      if (a.cls == traffic::MarkovState::alarm)
        s = 2;
      else if (s == 0)
        s = 1;
    }
  }
  for (const auto& dev : trace.devices) {
    const char* name = status[dev.id] == 2   ? "alarm"
                       : status[dev.id] == 1 ? "data"
                                             : "silent";
    out << dev.id << ',' << dev.x << ',' << dev.y << ',' << name << '\n';
  }
}

std::uint64_t config_hash(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string canonical_config(const ExperimentConfig& config) {
  std::ostringstream out;
  out.precision(17);
  const auto& t = config.traffic;
  out << "scenario=" << config.scenario << ";devices=" << t.device_count
      << ";area=" << t.area_side_m << ";run_time=" << t.run_time_s
      << ";slot=" << t.slot_duration_s << ";lambda_data=" << t.lambda_data
      << ";lambda_alarm=" << t.lambda_alarm
      << ";data_bytes=" << t.data_packet_bytes
      << ";alarm_bytes=" << t.alarm_packet_bytes
      << ";processes=" << config.process_count
      << ";threshold=" << t.coordination_threshold
      << ";alpha=" << config.scheduler.exploration_rate
      << ";a=" << config.scheduler.ra_fraction
      << ";margin=" << config.scheduler.margin_slots
      << ";snr_db=" << config.scheduler.snr_db
      << ";uses=" << config.scheduler.symbol_uses_per_slot
      << ";kernel_sigma=" << config.classifier.kernel.sigma
      << ";svm_c=" << config.classifier.c
      << ";miss=" << config.sweep.oracle.miss_rate
      << ";false_active=" << config.sweep.oracle.false_active_rate
      << ";bin=" << config.sweep.oracle.bin_slots << ";resources=";
  for (int r : config.sweep.resource_counts) out << r << ' ';
  out << ";policies=";
  for (auto p : config.sweep.policies) out << sched::to_string(p) << ' ';
  out << ";seeds=";
  for (auto s : config.sweep.seeds) out << s << ' ';
  return out.str();
}

}  // namespace fugsim::experiment
