#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fugsim/lstm.hpp"

namespace fugsim::predictor {

// Rolling protocol spans, all in slots. Each iteration trains on the
// most recent train_span, predicts predict_span, receives ground truth
// for the first predict_span - correct_span of it, then advances by
// that same amount.
struct WindowPlan {
  int train_span = 0;
  int predict_span = 0;
  int correct_span = 0;  // the uncorrected tail of each forecast

  int advance() const { return predict_span - correct_span; }
  void validate() const;
};

enum class Provenance : std::uint8_t { observed = 0, predicted = 1, corrected = 2 };

struct ActivitySeries {
  int device_id = 0;
  std::vector<std::uint8_t> bits;
  std::vector<Provenance> prov;

  std::size_t size() const { return bits.size(); }
  void append(std::uint8_t bit, Provenance p);
};

struct ErrorTally {
  long false_active = 0;  // predicted active, device silent
  long false_silent = 0;  // predicted silent, device active
  long correct = 0;
};

// Sliding windows advancing by one sample; window k covers
// [k, k + unroll) and its target is sample k + unroll.
struct WindowSet {
  std::vector<std::vector<lstm::VectorXd>> inputs;
  std::vector<double> targets;
};
WindowSet make_windows(std::span<const std::uint8_t> series, int unroll);

struct CorrectionResult {
  std::vector<std::uint8_t> corrected_bits;
  ErrorTally tally;
};
CorrectionResult correct(std::span<const std::uint8_t> forecast,
                         std::span<const std::uint8_t> truth);

// Model abstraction driven by the rolling protocol.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual void fit(std::span<const std::uint8_t> history) = 0;
  virtual std::vector<std::uint8_t> predict(
      std::span<const std::uint8_t> history, int steps) = 0;
};

struct LstmForecasterConfig {
  std::vector<int> hidden_sizes{32, 16};
  int unroll = 50;
  lstm::TrainConfig train;
};

class LstmForecaster : public Forecaster {
 public:
  explicit LstmForecaster(const LstmForecasterConfig& config);
  void fit(std::span<const std::uint8_t> history) override;
  std::vector<std::uint8_t> predict(std::span<const std::uint8_t> history,
                                    int steps) override;
  const lstm::Network& network() const { return net_; }
  const std::vector<double>& loss_history() const { return loss_history_; }

 private:
  LstmForecasterConfig config_;
  lstm::Network net_;
  std::vector<double> loss_history_;
  bool fitted_ = false;
};

struct ForecastRecord {
  int device_id = 0;
  long slot = 0;
  std::uint8_t predicted = 0;
  std::uint8_t truth = 0;
  bool truth_known = false;
  Provenance provenance = Provenance::predicted;
};

struct IterationReport {
  int index = 0;
  long forecast_start = 0;
  ErrorTally tally;
  double accuracy = 0.0;  // over the corrected span
};

struct RollingResult {
  ActivitySeries series;  // observed prefix + corrected extension
  std::vector<ForecastRecord> records;
  std::vector<IterationReport> iterations;
};

// Runs `iterations` train/predict/correct rounds against the ground
// truth series. truth.size() must cover train_span plus the advanced
// spans; only already-revealed slots ever enter a training window.
RollingResult rolling_predict(const WindowPlan& plan,
                              std::span<const std::uint8_t> truth,
                              int device_id, Forecaster& model,
                              int iterations);

void write_forecast_csv(std::span<const ForecastRecord> records,
                        std::ostream& out);
void write_iteration_csv(std::span<const IterationReport> iterations,
                         std::ostream& out);

const char* to_string(Provenance p);

}  // namespace fugsim::predictor
