#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fugsim/random.hpp"

namespace fugsim::traffic {

enum class MarkovState : std::uint8_t { data = 0, alarm = 1 };
enum class ClassLabel : std::uint8_t { uncoordinated = 0, coordinated = 1 };

using Matrix2 = std::array<std::array<double, 2>, 2>;
using Vector2 = std::array<double, 2>;

struct DeviceDescriptor {
  int id = 0;
  double x = 0.0;  // meters
  double y = 0.0;
  ClassLabel class_label = ClassLabel::uncoordinated;
  MarkovState state = MarkovState::data;
};

// Row-stochastic state matrices for coordinated (event-affected) and
// uncoordinated behaviour plus the matching state probability vectors.
struct StateMatrices {
  Matrix2 coordinated{{{0.1, 0.9}, {0.9, 0.1}}};
  Matrix2 uncoordinated{{{1.0, 0.0}, {0.9, 0.1}}};
  Vector2 pi_coordinated{0.5, 0.5};
  Vector2 pi_uncoordinated{1.0, 0.0};

  void validate() const;  // throws std::invalid_argument
};

// Spatio-temporal event driver: Gaussian footprint around an epicenter,
// active in the half-open window [t_start, t_start + duration).
struct BackgroundProcess {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double t_start = 0.0;
  double duration = 1.0;

  void validate() const;
};

struct TrafficConfig {
  int device_count = 1000;
  double area_side_m = 1000.0;
  double run_time_s = 60.0;
  double slot_duration_s = 1e-3;
  double lambda_data = 1.0 / 3600.0;  // packets per second, data state
  double lambda_alarm = 1.0;          // packets per second, alarm state
  int data_packet_bytes = 100;
  int alarm_packet_bytes = 1000;
  std::vector<BackgroundProcess> processes;
  StateMatrices matrices;
  // A device is coordinated (alarm-capable) iff its strongest spatial
  // weight over all processes exceeds this.
  double coordination_threshold = 0.05;
  std::uint64_t seed = 1;

  int slot_count() const;
  void validate() const;
};

struct Arrival {
  std::int32_t slot = 0;
  std::int32_t device = 0;
  MarkovState cls = MarkovState::data;
  std::int32_t count = 0;
  std::int64_t bytes = 0;
};

// Dense per-device-per-slot bit storage.
class BitGrid {
 public:
  BitGrid() = default;
  BitGrid(int rows, int cols);
  bool get(int row, int col) const;
  void set(int row, int col);
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  long count_row(int row) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

struct TrafficTrace {
  TrafficConfig config;
  std::vector<DeviceDescriptor> devices;  // state = final slot state
  std::vector<Arrival> arrivals;          // sorted by (slot, device)
  BitGrid activity;                        // 1 iff >=1 arrival in slot
  BitGrid alarm_state;                     // 1 iff device in alarm state

  long total_packets() const;
  long alarm_packets() const;
  long total_bytes() const;
};

// Unnormalized Gaussian kernel of the process footprint at (x, y);
// equals 1 at the epicenter and decays with distance.
double spatial_weight(const BackgroundProcess& process, double x, double y);

// 0 outside the process window, a fresh U(0,1) draw inside it.
template <typename Urbg>
double temporal_sample(const BackgroundProcess& process, double t,
                       Urbg& gen) {
  if (t < process.t_start || t >= process.t_start + process.duration)
    return 0.0;
  return rng::uniform01(gen);
}

// theta_n = 1 - prod_m (1 - delta_m * theta_m) over the per-process
// weight/sample pairs.
double combined_theta(
    std::span<const std::pair<double, double>> weights_and_samples);

// P_n = theta * P_C + (1 - theta) * P_U.
Matrix2 transition_matrix(double theta, const StateMatrices& matrices);

Vector2 interpolate_pi(double theta, const StateMatrices& matrices);

template <typename Urbg>
MarkovState step_state(MarkovState current, const Matrix2& transition,
                       Urbg& gen) {
  const auto& row = transition[static_cast<int>(current)];
  return rng::uniform01(gen) < row[0] ? MarkovState::data
                                      : MarkovState::alarm;
}

struct ArrivalDraw {
  int count = 0;
  MarkovState cls = MarkovState::data;
};

template <typename Urbg>
ArrivalDraw generate_arrivals(MarkovState state, double lambda_data,
                              double lambda_alarm, double slot_duration_s,
                              Urbg& gen) {
  const double rate =
      state == MarkovState::alarm ? lambda_alarm : lambda_data;
  ArrivalDraw draw;
  draw.cls = state;
  draw.count =
      rng::poisson_from_uniform(rate * slot_duration_s, rng::uniform01(gen));
  return draw;
}

// Full CMMPP / M-CMMPP run. Deterministic given config.seed.
TrafficTrace simulate(const TrafficConfig& config);

// CSV with header slot,device_id,state,arrivals,class,bytes; one row per
// device-slot with at least one arrival.
void write_trace_csv(const TrafficTrace& trace, std::ostream& out);

const char* to_string(MarkovState state);
const char* to_string(ClassLabel label);

}  // namespace fugsim::traffic
