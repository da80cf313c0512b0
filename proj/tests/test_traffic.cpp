#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "fugsim/random.hpp"
#include "fugsim/traffic.hpp"

using namespace fugsim;
using traffic::BackgroundProcess;
using traffic::MarkovState;

namespace {

traffic::TrafficConfig small_config() {
  traffic::TrafficConfig cfg;
  cfg.device_count = 200;
  cfg.area_side_m = 1000.0;
  cfg.run_time_s = 10.0;
  cfg.slot_duration_s = 1e-3;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("spatial weight matches the closed-form kernel") {
  BackgroundProcess p{500.0, 500.0, 100.0, 150.0, 0.0, 10.0};
  CHECK(traffic::spatial_weight(p, 500.0, 500.0) == doctest::Approx(1.0));
  CHECK(traffic::spatial_weight(p, 600.0, 500.0) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(traffic::spatial_weight(p, 500.0 + 5000.0, 500.0) < 1e-100);
  CHECK_THROWS_AS(traffic::spatial_weight(
                      p, std::numeric_limits<double>::infinity(), 0.0),
                  std::invalid_argument);
  // Strictly decreasing along each axis.
  double prev = 1.0;
  for (int step = 1; step <= 20; ++step) {
    const double w = traffic::spatial_weight(p, 500.0 + step * 27.0, 500.0);
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("temporal sample window semantics and mean") {
  BackgroundProcess p{0.0, 0.0, 1.0, 1.0, 5.0, 10.0};
  rng::SplitMix64 gen(3);
  CHECK(traffic::temporal_sample(p, 4.999, gen) == 0.0);
  CHECK(traffic::temporal_sample(p, 15.0, gen) == 0.0);  // half-open window
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = traffic::temporal_sample(p, 10.0, gen);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    sum += v;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("combined theta complement product") {
  using P = std::pair<double, double>;
  std::vector<P> one{{0.3, 0.5}};
  CHECK(traffic::combined_theta(one) == doctest::Approx(0.15));
  std::vector<P> two{{1.0, 0.5}, {1.0, 0.5}};
  CHECK(traffic::combined_theta(two) == doctest::Approx(0.75));
  std::vector<P> saturated{{1.0, 1.0}, {0.2, 0.1}};
  CHECK(traffic::combined_theta(saturated) == doctest::Approx(1.0));
  std::vector<P> bad{{1.5, 1.0}};
  CHECK_THROWS_AS(traffic::combined_theta(bad), std::invalid_argument);

  // M = 1 reduces exactly to the plain product, and the result is
  // invariant under permutation of the component list.
  rng::SplitMix64 gen(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = rng::uniform01(gen);
    const double t = rng::uniform01(gen);
    std::vector<P> m1{{d, t}};
    CHECK(traffic::combined_theta(m1) == d * t);

    std::vector<P> abc{{rng::uniform01(gen), rng::uniform01(gen)},
                       {rng::uniform01(gen), rng::uniform01(gen)},
                       {rng::uniform01(gen), rng::uniform01(gen)}};
    std::vector<P> cba{abc[2], abc[0], abc[1]};
    CHECK(traffic::combined_theta(abc) ==
          doctest::Approx(traffic::combined_theta(cba)).epsilon(1e-14));
  }
}

TEST_CASE("transition matrix interpolation is row stochastic") {
  traffic::StateMatrices m;
  CHECK(traffic::transition_matrix(0.0, m) == m.uncoordinated);
  CHECK(traffic::transition_matrix(1.0, m) == m.coordinated);
  const auto mid = traffic::transition_matrix(0.5, m);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(mid[i][j] ==
            doctest::Approx(0.5 * (m.coordinated[i][j] +
                                   m.uncoordinated[i][j])));
  CHECK_THROWS_AS(traffic::transition_matrix(1.5, m),
                  std::invalid_argument);

  rng::SplitMix64 gen(13);
  for (int trial = 0; trial < 10000; ++trial) {
    traffic::StateMatrices random;
    for (auto* mat : {&random.coordinated, &random.uncoordinated})
      for (int row = 0; row < 2; ++row) {
        const double p = rng::uniform01(gen);
        (*mat)[row][0] = p;
        (*mat)[row][1] = 1.0 - p;
      }
    const auto out =
        traffic::transition_matrix(rng::uniform01(gen), random);
    for (int row = 0; row < 2; ++row) {
      CHECK(out[row][0] + out[row][1] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(out[row][0] >= 0.0);
      CHECK(out[row][1] >= 0.0);
    }
  }
}

TEST_CASE("markov step follows the transition row") {
  rng::SplitMix64 gen(17);
  traffic::Matrix2 absorbing{{{1.0, 0.0}, {0.0, 1.0}}};
  CHECK(traffic::step_state(MarkovState::data, absorbing, gen) ==
        MarkovState::data);
  traffic::Matrix2 flip{{{0.0, 1.0}, {1.0, 0.0}}};
  CHECK(traffic::step_state(MarkovState::data, flip, gen) ==
        MarkovState::alarm);

  traffic::Matrix2 half{{{0.5, 0.5}, {0.5, 0.5}}};
  int alarms = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    alarms += traffic::step_state(MarkovState::data, half, gen) ==
              MarkovState::alarm;
  CHECK(static_cast<double>(alarms) / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("arrival draws match the poisson mean") {
  rng::SplitMix64 gen(19);
  auto zero = traffic::generate_arrivals(MarkovState::data, 1e-12, 1e-12,
                                         1.0, gen);
  CHECK(zero.count == 0);

  long total = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    total +=
        traffic::generate_arrivals(MarkovState::alarm, 0.1, 1.0, 1.0, gen)
            .count;
  CHECK(static_cast<double>(total) / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson chi-square goodness of fit at quiet rate") {
  // All processes inactive: arrivals must be Poisson(lambda_data * slot).
  rng::SplitMix64 gen(23);
  const double mean = 1.0;
  const int n = 100000;
  std::vector<long> observed(5, 0);
  for (int i = 0; i < n; ++i) {
    const int count =
        traffic::generate_arrivals(MarkovState::data, 1.0, 2.0, 1.0, gen)
            .count;
    ++observed[std::min(count, 4)];
  }
  double expected[5];
  double p = std::exp(-mean);
  double cum = 0.0;
  for (int k = 0; k < 4; ++k) {
    expected[k] = n * p;
    cum += p;
    p *= mean / (k + 1);
  }
  expected[4] = n * (1.0 - cum);
  double chi2 = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double diff = observed[k] - expected[k];
    chi2 += diff * diff / expected[k];
  }
  CHECK(chi2 < 13.277);  // 1% critical value, 4 degrees of freedom
}

TEST_CASE("simulate determinism and degenerate configs") {
  traffic::TrafficConfig cfg = small_config();
  cfg.processes.push_back({300.0, 300.0, 120.0, 120.0, 2.0, 5.0});

  const auto a = traffic::simulate(cfg);
  const auto b = traffic::simulate(cfg);
  REQUIRE(a.arrivals.size() == b.arrivals.size());
  for (std::size_t i = 0; i < a.arrivals.size(); ++i) {
    CHECK(a.arrivals[i].slot == b.arrivals[i].slot);
    CHECK(a.arrivals[i].device == b.arrivals[i].device);
    CHECK(a.arrivals[i].count == b.arrivals[i].count);
  }

  traffic::TrafficConfig empty = small_config();
  empty.device_count = 0;
  const auto none = traffic::simulate(empty);
  CHECK(none.arrivals.empty());
}

TEST_CASE("no background process means no alarms under absorbing P_U") {
  traffic::TrafficConfig cfg = small_config();
  // pi_U starts everyone in data; P_U keeps data absorbing.
  const auto trace = traffic::simulate(cfg);
  CHECK(trace.alarm_packets() == 0);
  for (const auto& dev : trace.devices) {
    CHECK(dev.class_label == traffic::ClassLabel::uncoordinated);
    CHECK(trace.alarm_state.count_row(dev.id) == 0);
  }
  // Startup: every device transmits one data packet in slot 0.
  long startup = 0;
  for (const auto& a : trace.arrivals)
    if (a.slot == 0) {
      ++startup;
      CHECK(a.count == 1);
      CHECK(a.cls == MarkovState::data);
    }
  CHECK(startup == cfg.device_count);
}

TEST_CASE("arrival class matches device state and activity bits") {
  traffic::TrafficConfig cfg = small_config();
  cfg.processes.push_back({500.0, 500.0, 200.0, 200.0, 1.0, 8.0});
  const auto trace = traffic::simulate(cfg);
  REQUIRE(trace.alarm_packets() > 0);
  for (const auto& a : trace.arrivals) {
    CHECK(trace.activity.get(a.device, a.slot));
    const bool in_alarm = trace.alarm_state.get(a.device, a.slot);
    CHECK((a.cls == MarkovState::alarm) == in_alarm);
    CHECK(a.count > 0);
  }
}

TEST_CASE("alarm rate concentrates near the epicenter") {
  int wins = 0;
  const int seeds = 20;
  for (int seed = 1; seed <= seeds; ++seed) {
    traffic::TrafficConfig cfg = small_config();
    cfg.device_count = 300;
    cfg.seed = seed * 1000 + 5;
    cfg.processes.push_back({500.0, 500.0, 150.0, 150.0, 1.0, 8.0});
    const auto trace = traffic::simulate(cfg);

    std::vector<std::pair<double, int>> by_distance;
    for (const auto& dev : trace.devices) {
      const double dx = dev.x - 500.0, dy = dev.y - 500.0;
      by_distance.push_back({dx * dx + dy * dy, dev.id});
    }
    std::sort(by_distance.begin(), by_distance.end());
    const std::size_t decile = by_distance.size() / 10;
    long near = 0, far = 0;
    for (std::size_t i = 0; i < decile; ++i) {
      near += trace.alarm_state.count_row(by_distance[i].second);
      far += trace.alarm_state.count_row(
          by_distance[by_distance.size() - 1 - i].second);
    }
    if (near > far) ++wins;
  }
  CHECK(wins == seeds);
}

TEST_CASE("more background processes produce more alarm packets") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    traffic::TrafficConfig cfg = small_config();
    cfg.device_count = 400;
    cfg.seed = seed;
    cfg.processes.push_back({250.0, 250.0, 150.0, 150.0, 1.0, 6.0});
    const auto m1 = traffic::simulate(cfg);

    cfg.processes.push_back({750.0, 250.0, 150.0, 150.0, 2.0, 6.0});
    cfg.processes.push_back({250.0, 750.0, 150.0, 150.0, 3.0, 6.0});
    cfg.processes.push_back({750.0, 750.0, 150.0, 150.0, 4.0, 6.0});
    const auto m4 = traffic::simulate(cfg);

    CHECK(m4.alarm_packets() > m1.alarm_packets());
  }
}

TEST_CASE("trace csv export schema") {
  traffic::TrafficConfig cfg = small_config();
  cfg.device_count = 5;
  cfg.run_time_s = 0.01;
  const auto trace = traffic::simulate(cfg);
  std::ostringstream out;
  traffic::write_trace_csv(trace, out);
  const std::string text = out.str();
  CHECK(text.rfind("slot,device_id,state,arrivals,class,bytes\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') ==
        1 + static_cast<long>(trace.arrivals.size()));
}
