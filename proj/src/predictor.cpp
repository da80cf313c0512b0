#include "fugsim/predictor.hpp"

#include <ostream>
#include <stdexcept>

namespace fugsim::predictor {

void WindowPlan::validate() const {
  if (!(correct_span > 0 && correct_span < predict_span &&
        predict_span <= train_span))
    throw std::invalid_argument(
        "WindowPlan: need 0 < correction < prediction <= training span");
}

void ActivitySeries::append(std::uint8_t bit, Provenance p) {
  bits.push_back(bit);
  prov.push_back(p);
}

WindowSet make_windows(std::span<const std::uint8_t> series, int unroll) {
  if (unroll < 1) throw std::invalid_argument("make_windows: unroll >= 1");
  if (series.size() <= static_cast<std::size_t>(unroll))
    throw std::invalid_argument(
        "make_windows: series must be longer than the unroll length");
  WindowSet out;
  const std::size_t count = series.size() - unroll;
  out.inputs.reserve(count);
  out.targets.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<lstm::VectorXd> window;
    window.reserve(unroll);
    for (int i = 0; i < unroll; ++i) {
      lstm::VectorXd x(1);
      x(0) = static_cast<double>(series[k + i]);
      window.push_back(std::move(x));
    }
    out.inputs.push_back(std::move(window));
    out.targets.push_back(static_cast<double>(series[k + unroll]));
  }
  return out;
}

CorrectionResult correct(std::span<const std::uint8_t> forecast,
                         std::span<const std::uint8_t> truth) {
  if (forecast.size() != truth.size())
    throw std::invalid_argument("correct: span mismatch");
  CorrectionResult result;
  result.corrected_bits.assign(truth.begin(), truth.end());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (forecast[i] == truth[i])
      ++result.tally.correct;
    else if (forecast[i] && !truth[i])
      ++result.tally.false_active;
    else
      ++result.tally.false_silent;
  }
  return result;
}

LstmForecaster::LstmForecaster(const LstmForecasterConfig& config)
    : config_(config),
      net_(lstm::Network::make(1, config.hidden_sizes,
                               config.train.seed)) {}

void LstmForecaster::fit(std::span<const std::uint8_t> history) {
  WindowSet windows = make_windows(history, config_.unroll);
  auto losses = lstm::train(net_, windows.inputs, windows.targets,
                            config_.train);
  loss_history_.insert(loss_history_.end(), losses.begin(), losses.end());
  fitted_ = true;
}

std::vector<std::uint8_t> LstmForecaster::predict(
    std::span<const std::uint8_t> history, int steps) {
  if (!fitted_) throw std::runtime_error("LstmForecaster: fit first");
  if (history.size() < static_cast<std::size_t>(config_.unroll))
    throw std::invalid_argument("LstmForecaster: history shorter than unroll");

  std::vector<double> context(history.end() - config_.unroll, history.end());
  std::vector<std::uint8_t> out;
  out.reserve(steps);
  for (int s = 0; s < steps; ++s) {
    std::vector<lstm::VectorXd> window;
    window.reserve(config_.unroll);
    for (double v : context) {
      lstm::VectorXd x(1);
      x(0) = v;
      window.push_back(std::move(x));
    }
    auto fwd = lstm::forward_sequence(net_, window, lstm::Mode::infer, 0.0, 0);
    const std::uint8_t bit = fwd.outputs.back() > 0.5 ? 1 : 0;
    out.push_back(bit);
    context.erase(context.begin());
    context.push_back(static_cast<double>(bit));
  }
  return out;
}

RollingResult rolling_predict(const WindowPlan& plan,
                              std::span<const std::uint8_t> truth,
                              int device_id, Forecaster& model,
                              int iterations) {
  plan.validate();
  if (iterations < 1)
    throw std::invalid_argument("rolling_predict: iterations >= 1");
  const long needed = plan.train_span +
                      static_cast<long>(plan.advance()) * iterations;
  if (static_cast<long>(truth.size()) < needed)
    throw std::invalid_argument(
        "rolling_predict: ground truth series too short for the plan");

  RollingResult result;
  result.series.device_id = device_id;
  for (int i = 0; i < plan.train_span; ++i)
    result.series.append(truth[i], Provenance::observed);

  for (int it = 0; it < iterations; ++it) {
    const long frontier = static_cast<long>(result.series.size());
    std::span<const std::uint8_t> train_view(
        result.series.bits.data() + frontier - plan.train_span,
        static_cast<std::size_t>(plan.train_span));
    model.fit(train_view);

    std::vector<std::uint8_t> forecast =
        model.predict(train_view, plan.predict_span);

    const int reveal = plan.advance();
    std::span<const std::uint8_t> truth_view(truth.data() + frontier,
                                             static_cast<std::size_t>(reveal));
    CorrectionResult corr = correct(
        std::span<const std::uint8_t>(forecast.data(),
                                      static_cast<std::size_t>(reveal)),
        truth_view);

    IterationReport report;
    report.index = it;
    report.forecast_start = frontier;
    report.tally = corr.tally;
    report.accuracy =
        static_cast<double>(corr.tally.correct) / static_cast<double>(reveal);
    result.iterations.push_back(report);

    for (int i = 0; i < plan.predict_span; ++i) {
      ForecastRecord rec;
      rec.device_id = device_id;
      rec.slot = frontier + i;
      rec.predicted = forecast[i];
      if (i < reveal) {
        rec.truth = truth[frontier + i];
        rec.truth_known = true;
        rec.provenance = Provenance::corrected;
      } else {
        rec.provenance = Provenance::predicted;
      }
      result.records.push_back(rec);
    }

    // Only the corrected prefix extends the training series; the
    // uncorrected tail is re-predicted next iteration.
    for (int i = 0; i < reveal; ++i)
      result.series.append(corr.corrected_bits[i], Provenance::corrected);
  }
  return result;
}

void write_forecast_csv(std::span<const ForecastRecord> records,
                        std::ostream& out) {
  out << "device_id,slot,predicted,truth,provenance\n";
  for (const auto& r : records) {
    out << r.device_id << ',' << r.slot << ',' << int(r.predicted) << ',';
    if (r.truth_known)
      out << int(r.truth);
    else
      out << "";
    out << ',' << to_string(r.provenance) << '\n';
  }
}

void write_iteration_csv(std::span<const IterationReport> iterations,
                         std::ostream& out) {
  out << "iteration,forecast_start,correct,false_active,false_silent,"
         "accuracy\n";
  for (const auto& it : iterations)
    out << it.index << ',' << it.forecast_start << ',' << it.tally.correct
        << ',' << it.tally.false_active << ',' << it.tally.false_silent << ','
        << it.accuracy << '\n';
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::observed: return "observed";
    case Provenance::predicted: return "predicted";
    case Provenance::corrected: return "corrected";
  }
  return "observed";
}

}  // namespace fugsim::predictor
