#include "fugsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace fugsim::traffic {

namespace {

// Draw-site tags for the keyed counter streams.
enum Tag : std::uint64_t {
  kTagPosX = 1,
  kTagPosY = 2,
  kTagInitState = 3,
  kTagTheta = 4,
  kTagState = 5,
  kTagArrival = 6,
};

void check_stochastic_row(const std::array<double, 2>& row,
                          const char* what) {
  for (double p : row)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(std::string(what) +
                                  ": entry outside [0,1]");
  if (std::abs(row[0] + row[1] - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": row sum != 1");
}

}  // namespace

void StateMatrices::validate() const {
  check_stochastic_row(coordinated[0], "P_C");
  check_stochastic_row(coordinated[1], "P_C");
  check_stochastic_row(uncoordinated[0], "P_U");
  check_stochastic_row(uncoordinated[1], "P_U");
  check_stochastic_row(pi_coordinated, "pi_C");
  check_stochastic_row(pi_uncoordinated, "pi_U");
}

void BackgroundProcess::validate() const {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0))
    throw std::invalid_argument("BackgroundProcess: sigma must be > 0");
  if (!(duration > 0.0))
    throw std::invalid_argument("BackgroundProcess: duration must be > 0");
  if (!std::isfinite(mu_x) || !std::isfinite(mu_y) ||
      !std::isfinite(t_start))
    throw std::invalid_argument("BackgroundProcess: non-finite parameter");
}

int TrafficConfig::slot_count() const {
  return static_cast<int>(std::llround(run_time_s / slot_duration_s));
}

void TrafficConfig::validate() const {
  if (device_count < 0)
    throw std::invalid_argument("TrafficConfig: negative device count");
  if (!(area_side_m > 0.0))
    throw std::invalid_argument("TrafficConfig: area side must be > 0");
  if (!(slot_duration_s > 0.0))
    throw std::invalid_argument("TrafficConfig: slot duration must be > 0");
  if (!(lambda_data > 0.0) || lambda_alarm < lambda_data)
    throw std::invalid_argument(
        "TrafficConfig: need lambda_alarm >= lambda_data > 0");
  if (data_packet_bytes <= 0 || alarm_packet_bytes <= 0)
    throw std::invalid_argument("TrafficConfig: packet sizes must be > 0");
  matrices.validate();
  for (const auto& p : processes) p.validate();
}

BitGrid::BitGrid(int rows, int cols)
    : rows_(rows),
      cols_(cols),
      words_per_row_((cols + 63) / 64),
      words_(static_cast<std::size_t>(rows) * words_per_row_, 0) {}

bool BitGrid::get(int row, int col) const {
  const std::size_t idx =
      static_cast<std::size_t>(row) * words_per_row_ + (col >> 6);
  return (words_[idx] >> (col & 63)) & 1u;
}

void BitGrid::set(int row, int col) {
  const std::size_t idx =
      static_cast<std::size_t>(row) * words_per_row_ + (col >> 6);
  words_[idx] |= std::uint64_t{1} << (col & 63);
}

long BitGrid::count_row(int row) const {
  long n = 0;
  const std::size_t base = static_cast<std::size_t>(row) * words_per_row_;
  for (int w = 0; w < words_per_row_; ++w)
    n += __builtin_popcountll(words_[base + w]);
  return n;
}

long TrafficTrace::total_packets() const {
  long n = 0;
  for (const auto& a : arrivals) n += a.count;
  return n;
}

long TrafficTrace::alarm_packets() const {
  long n = 0;
  for (const auto& a : arrivals)
    if (a.cls == MarkovState::alarm) n += a.count;
  return n;
}

long TrafficTrace::total_bytes() const {
  long n = 0;
  for (const auto& a : arrivals) n += a.bytes;
  return n;
}

double spatial_weight(const BackgroundProcess& process, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw std::invalid_argument("spatial_weight: non-finite coordinates");
  if (!(process.sigma_x > 0.0) || !(process.sigma_y > 0.0))
    throw std::invalid_argument("spatial_weight: sigma must be > 0");
  const double dx = (x - process.mu_x) / process.sigma_x;
  const double dy = (y - process.mu_y) / process.sigma_y;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

double combined_theta(
    std::span<const std::pair<double, double>> weights_and_samples) {
  double no_alarm = 1.0;
  for (const auto& [weight, sample] : weights_and_samples) {
    const double p = weight * sample;
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(
          "combined_theta: component product outside [0,1]");
    no_alarm *= 1.0 - p;
  }
  return 1.0 - no_alarm;
}

Matrix2 transition_matrix(double theta, const StateMatrices& matrices) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("transition_matrix: theta outside [0,1]");
  Matrix2 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      out[i][j] = theta * matrices.coordinated[i][j] +
                  (1.0 - theta) * matrices.uncoordinated[i][j];
  return out;
}

Vector2 interpolate_pi(double theta, const StateMatrices& matrices) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("interpolate_pi: theta outside [0,1]");
  return {theta * matrices.pi_coordinated[0] +
              (1.0 - theta) * matrices.pi_uncoordinated[0],
          theta * matrices.pi_coordinated[1] +
              (1.0 - theta) * matrices.pi_uncoordinated[1]};
}

namespace {

struct KeyedUniform {
  std::uint64_t seed, tag, a;
  double at(std::uint64_t b) const {
    return rng::keyed_uniform(seed, tag, a, b);
  }
};

}  // namespace

TrafficTrace simulate(const TrafficConfig& config) {
  config.validate();

  TrafficTrace trace;
  trace.config = config;
  const int slots = config.slot_count();
  const int devices = config.device_count;
  const std::size_t processes = config.processes.size();

  trace.devices.resize(devices);
  trace.activity = BitGrid(devices, std::max(slots, 1));
  trace.alarm_state = BitGrid(devices, std::max(slots, 1));

  // Per-device spatial weights are constant; compute them once.
  std::vector<double> delta(static_cast<std::size_t>(devices) * processes);
  for (int d = 0; d < devices; ++d) {
    DeviceDescriptor& dev = trace.devices[d];
    dev.id = d;
    dev.x = rng::keyed_uniform(config.seed, kTagPosX, d, 0) *
            config.area_side_m;
    dev.y = rng::keyed_uniform(config.seed, kTagPosY, d, 0) *
            config.area_side_m;
    double max_delta = 0.0;
    for (std::size_t m = 0; m < processes; ++m) {
      const double w = spatial_weight(config.processes[m], dev.x, dev.y);
      delta[d * processes + m] = w;
      max_delta = std::max(max_delta, w);
    }
    dev.class_label = max_delta > config.coordination_threshold
                          ? ClassLabel::coordinated
                          : ClassLabel::uncoordinated;
  }
  if (devices == 0 || slots == 0) return trace;

  const double p_no_data_arrival =
      std::exp(-config.lambda_data * config.slot_duration_s);

  std::vector<double> theta_m(processes);
  std::vector<std::pair<double, double>> pairs(processes);
  std::vector<MarkovState> state(devices);

  for (int t = 0; t < slots; ++t) {
    const double now = t * config.slot_duration_s;
    bool any_process_active = false;
    for (std::size_t m = 0; m < processes; ++m) {
      const BackgroundProcess& p = config.processes[m];
      if (now >= p.t_start && now < p.t_start + p.duration) {
        theta_m[m] = rng::keyed_uniform(config.seed, kTagTheta, m, t);
        any_process_active = true;
      } else {
        theta_m[m] = 0.0;
      }
    }

    for (int d = 0; d < devices; ++d) {
      double theta = 0.0;
      if (any_process_active) {
        for (std::size_t m = 0; m < processes; ++m)
          pairs[m] = {delta[d * processes + m], theta_m[m]};
        theta = combined_theta(pairs);
      }

      if (t == 0) {
        // Initial state from the interpolated state probability vector.
        const Vector2 pi = interpolate_pi(theta, config.matrices);
        state[d] = rng::keyed_uniform(config.seed, kTagInitState, d, 0) <
                           pi[0]
                       ? MarkovState::data
                       : MarkovState::alarm;
      } else {
        const auto& pc = config.matrices.coordinated;
        const auto& pu = config.matrices.uncoordinated;
        const int row = static_cast<int>(state[d]);
        const double p_stay_data =
            theta * pc[row][0] + (1.0 - theta) * pu[row][0];
        if (!(state[d] == MarkovState::data && p_stay_data >= 1.0)) {
          const double u =
              rng::keyed_uniform(config.seed, kTagState, d, t);
          state[d] =
              u < p_stay_data ? MarkovState::data : MarkovState::alarm;
        }
      }
      if (state[d] == MarkovState::alarm) trace.alarm_state.set(d, t);

      int count = 0;
      MarkovState cls = state[d];
      if (t == 0) {
        // Startup phase: every device emits one packet in slot 0.
        count = 1;
      } else {
        const double u =
            rng::keyed_uniform(config.seed, kTagArrival, d, t);
        if (state[d] == MarkovState::data) {
          if (u >= p_no_data_arrival)
            count = rng::poisson_from_uniform(
                config.lambda_data * config.slot_duration_s, u);
        } else {
          count = rng::poisson_from_uniform(
              config.lambda_alarm * config.slot_duration_s, u);
        }
      }
      if (count > 0) {
        const std::int64_t size = cls == MarkovState::alarm
                                      ? config.alarm_packet_bytes
                                      : config.data_packet_bytes;
        trace.arrivals.push_back(
            {t, d, cls, count, count * size});
        trace.activity.set(d, t);
      }
    }
  }

  for (int d = 0; d < devices; ++d) trace.devices[d].state = state[d];
  return trace;
}

void write_trace_csv(const TrafficTrace& trace, std::ostream& out) {
  out << "slot,device_id,state,arrivals,class,bytes\n";
  for (const auto& a : trace.arrivals)
    out << a.slot << ',' << a.device << ',' << to_string(a.cls) << ','
        << a.count << ',' << to_string(a.cls) << ',' << a.bytes << '\n';
}

const char* to_string(MarkovState state) {
  return state == MarkovState::alarm ? "alarm" : "data";
}

const char* to_string(ClassLabel label) {
  return label == ClassLabel::coordinated ? "coordinated" : "uncoordinated";
}

}  // namespace fugsim::traffic
