#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fugsim/ingest.hpp"
#include "fugsim/metrics.hpp"
#include "fugsim/predictor.hpp"
#include "fugsim/scheduler.hpp"
#include "fugsim/svm.hpp"
#include "fugsim/traffic.hpp"

namespace fugsim::experiment {

// Uniform sampling ranges for background-process placement; one process
// set is drawn per seed.
struct ProcessRanges {
  double sigma_min = 80.0, sigma_max = 220.0;   // meters
  double start_min = 2.0, start_max = 30.0;     // seconds
  double duration_min = 8.0, duration_max = 25.0;
};

struct ClassifierConfig {
  svm::KernelSpec kernel;           // rbf, sigma 0.15 on unit square
  double c = 10.0;
  double tol = 1e-3;
  int max_passes = 10;
  double balance_ratio = 3.0;       // majority undersampled to <= ratio:1
  double train_fraction = 0.67;
  std::uint64_t seed = 1;
};

struct PredictConfig {
  std::string series_path;          // NAB csv; empty = synthetic input
  ingest::BinarizeRule rule;        // statistical k = 1.5 by default
  int train_span = 2880;            // slots (10 days of 5-minute samples)
  predictor::WindowPlan plan{2880, 2, 1};
  predictor::LstmForecasterConfig forecaster;
  int iterations = 4;
};

struct SweepConfig {
  std::vector<int> resource_counts{10, 25, 50, 75, 100};
  std::vector<sched::Policy> policies{sched::Policy::fug,
                                      sched::Policy::genie,
                                      sched::Policy::random,
                                      sched::Policy::gbra};
  std::vector<std::uint64_t> seeds{1};
  sched::OracleNoise oracle;         // prediction-error emulation
  bool use_classifier_priorities = true;
  bool emit_logs = false;
};

struct ExperimentConfig {
  std::string scenario = "default";
  std::string output_dir = "out";
  traffic::TrafficConfig traffic;
  int process_count = 1;
  ProcessRanges ranges;
  ClassifierConfig classifier;
  PredictConfig predict;
  SweepConfig sweep;
  sched::SchedulerConfig scheduler;
};

// Draws process_count background processes uniformly within the area
// and ranges, deterministically from the seed.
std::vector<traffic::BackgroundProcess> sample_processes(
    int process_count, double area_side_m, const ProcessRanges& ranges,
    std::uint64_t seed);

traffic::TrafficConfig make_traffic_config(const ExperimentConfig& config,
                                           std::uint64_t seed);

// Device coordinate dataset labelled with the ground-truth class.
std::vector<svm::LabeledPoint> device_dataset(
    const traffic::TrafficTrace& trace);

struct ClassifierResult {
  svm::SvmModel model;
  svm::Scaler scaler;
  metrics::ConfusionMatrix test_confusion;
  metrics::ClassificationReport test_report;
  double train_seconds = 0.0;
  long train_size = 0;
  long test_size = 0;
};

ClassifierResult train_classifier(const traffic::TrafficTrace& trace,
                                  const ClassifierConfig& config);

// Per-device predicted priority (1 = alarm-capable) for every device.
std::vector<std::uint8_t> classify_devices(
    const svm::SvmModel& model, const svm::Scaler& scaler,
    const traffic::TrafficTrace& trace);

struct SweepRow {
  sched::RunSummary summary;
  long margin_waits = 0;
  long exploration_grants = 0;
  long corrections = 0;
};

// Full pipeline for one seed: trace, classifier-driven priorities,
// prediction feed, and one policy run per (policy, R).
struct SeedRunResult {
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;
};

SeedRunResult run_seed(const ExperimentConfig& config, std::uint64_t seed,
                       const std::string& log_dir = "");

void write_summary_header(std::ostream& out);
void write_summary_row(const SweepRow& row, std::ostream& out);

// Fig.2-style phase scatter files: startup / data / alarm / silent.
struct PhaseWindows {
  int data_begin = 0, data_end = 0;
  int alarm_begin = 0, alarm_end = 0;
  int silent_begin = 0, silent_end = 0;
};
PhaseWindows phase_windows(const traffic::TrafficConfig& config);
void write_phase_csv(const traffic::TrafficTrace& trace, int begin_slot,
                     int end_slot, bool startup, std::ostream& out);

// FNV-1a over the canonical config dump, for the run log.
std::uint64_t config_hash(const std::string& canonical);
std::string canonical_config(const ExperimentConfig& config);

}  // namespace fugsim::experiment
