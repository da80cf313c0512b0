#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "fugsim/random.hpp"

namespace fugsim::metrics {

struct ChannelDraw {
  double snr = 0.0;   // linear SNR
  double h_sq = 1.0;  // fading power gain |h|^2
};

// Shannon rate in bits per channel use, base-2 logarithm.
double rate_bits(const ChannelDraw& draw);

// Rayleigh envelope => |h|^2 ~ Exponential(mean 1).
template <typename Urbg>
double sample_fading(Urbg& gen) {
  return rng::exponential_from_uniform(rng::uniform01(gen));
}

struct DelayRecord {
  double hardware_s = 0.0;
  double overhead_s = 0.0;
  double queue_s = 0.0;
  double transmit_s = 0.0;
};

// Access delay T_a = T_overhead + T_q; hardware delay is neglected.
// Throws std::invalid_argument on negative components.
double access_delay_s(const DelayRecord& record);

// 2x2 counts, rows = true class, columns = predicted class.
// Index 0 = data (label -1), index 1 = alarm (label +1).
struct ConfusionMatrix {
  std::array<std::array<long, 2>, 2> counts{{{0, 0}, {0, 0}}};

  long total() const;
  long support(int true_class) const;
  long predicted(int pred_class) const;
  void add(int true_class, int pred_class, long n = 1);
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // A zero-denominator metric is reported as 0 with its flag cleared.
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
};

struct ClassificationReport {
  double accuracy = 0.0;
  std::array<ClassMetrics, 2> per_class{};  // [data, alarm]
};

// Throws std::invalid_argument if the matrix is empty or has a negative
// entry.
ClassificationReport classification_report(const ConfusionMatrix& cm);

// CSV block matching the Table-style column order
// (confusion matrix, accuracy, precision/recall, f1), one row per class.
std::string report_csv(const ConfusionMatrix& cm,
                       const ClassificationReport& report);

}  // namespace fugsim::metrics
