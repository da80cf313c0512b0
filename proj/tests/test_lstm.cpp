#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "fugsim/lstm.hpp"
#include "fugsim/random.hpp"

using namespace fugsim;
using lstm::Network;
using lstm::VectorXd;

namespace {

std::vector<VectorXd> random_window(int steps, int input_size,
                                    std::uint64_t seed) {
  rng::SplitMix64 gen(seed);
  std::vector<VectorXd> window;
  for (int t = 0; t < steps; ++t) {
    VectorXd x(input_size);
    for (int i = 0; i < input_size; ++i)
      x(i) = 2.0 * rng::uniform01(gen) - 1.0;
    window.push_back(x);
  }
  return window;
}

double forward_loss(const Network& net, const std::vector<VectorXd>& window,
                    const std::vector<double>& targets,
                    const std::vector<double>& weights) {
  auto fwd = lstm::forward_sequence(net, window, lstm::Mode::infer, 0.0, 0);
  return lstm::sequence_loss(fwd.outputs, targets, weights);
}

// Central finite differences against the analytic BPTT gradients.
double max_gradcheck_error(Network& net, const std::vector<VectorXd>& window,
                           const std::vector<double>& targets) {
  const std::vector<double> weights(window.size(), 1.0);
  auto fwd = lstm::forward_sequence(net, window, lstm::Mode::train, 0.0, 1);
  auto grads = lstm::backward_bptt(net, fwd.cache, targets, weights);

  const double h = 1e-5;
  double worst = 0.0;
  auto check_param = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = forward_loss(net, window, targets, weights);
    param = saved - h;
    const double down = forward_loss(net, window, targets, weights);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom =
        std::max({1e-4, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    for (int r = 0; r < layer.w.rows(); ++r)
      for (int c = 0; c < layer.w.cols(); ++c)
        check_param(layer.w(r, c), grads.dw[l](r, c));
    for (int i = 0; i < layer.b.size(); ++i)
      check_param(layer.b(i), grads.db[l](i));
  }
  for (int i = 0; i < net.readout.w.size(); ++i)
    check_param(net.readout.w(i), grads.readout_dw(i));
  check_param(net.readout.b, grads.readout_db);
  return worst;
}

}  // namespace

TEST_CASE("parameter count formula") {
  CHECK(lstm::param_count(1, 1) == 9);
  CHECK(lstm::param_count(50, 150) == 53100);
  CHECK(lstm::param_count(5, 0) == 0);
  CHECK_THROWS_AS(lstm::param_count(-1, 3), std::invalid_argument);

  // The constructed layer carries 4*O*(I+O) weights plus 4*O biases.
  const auto layer = lstm::LstmLayer::init(3, 4, 1);
  CHECK(layer.parameter_count() == 4 * 4 * (3 + 4) + 4 * 4);
  CHECK(layer.w.rows() == 16);
  CHECK(layer.w.cols() == 7);
}

TEST_CASE("cell forward analytic case with zero weights") {
  lstm::LstmLayer layer = lstm::LstmLayer::init(2, 3, 1);
  layer.w.setZero();
  layer.b.setZero();
  lstm::LstmState prev;
  prev.h = VectorXd::Zero(3);
  prev.c.resize(3);
  prev.c << 1.0, -2.0, 0.5;
  VectorXd x = VectorXd::Zero(2);

  const auto [next, cache] = lstm::cell_forward(layer, x, prev);
  for (int i = 0; i < 3; ++i) {
    CHECK(cache.gate_i(i) == doctest::Approx(0.5));
    CHECK(cache.gate_f(i) == doctest::Approx(0.5));
    CHECK(cache.gate_g(i) == doctest::Approx(0.0));
    CHECK(next.c(i) == doctest::Approx(0.5 * prev.c(i)));
    CHECK(next.h(i) == doctest::Approx(0.5 * std::tanh(0.5 * prev.c(i))));
  }

  // Zero previous state and zero weights give h = 0.
  lstm::LstmState zero = lstm::LstmState::zero(3);
  const auto [from_zero, unused] = lstm::cell_forward(layer, x, zero);
  CHECK(from_zero.h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("saturated forget gate carries the cell state bit-exactly") {
  lstm::LstmLayer layer = lstm::LstmLayer::init(2, 3, 1);
  layer.w.setZero();
  layer.b.setZero();
  layer.b.segment(0, 3).setConstant(-40.0);  // input gate -> 0
  layer.b.segment(3, 3).setConstant(40.0);   // forget gate -> 1
  lstm::LstmState prev;
  prev.h = VectorXd::Zero(3);
  prev.c.resize(3);
  prev.c << 0.731, -1.875, 3.25;
  const auto [next, cache] = lstm::cell_forward(layer, VectorXd::Zero(2), prev);
  for (int i = 0; i < 3; ++i) CHECK(next.c(i) == prev.c(i));
}

TEST_CASE("cell forward rejects bad input") {
  lstm::LstmLayer layer = lstm::LstmLayer::init(2, 3, 1);
  lstm::LstmState prev = lstm::LstmState::zero(3);
  CHECK_THROWS_AS(lstm::cell_forward(layer, VectorXd::Zero(5), prev),
                  std::invalid_argument);
  VectorXd bad(2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(lstm::cell_forward(layer, bad, prev), std::runtime_error);
}

TEST_CASE("forward sequence determinism and dropout equivalences") {
  const std::vector<int> hidden{4, 3};
  Network net = Network::make(2, hidden, 42);
  const auto window = random_window(6, 2, 9);

  const auto a = lstm::forward_sequence(net, window, lstm::Mode::infer, 0.4, 1);
  const auto b = lstm::forward_sequence(net, window, lstm::Mode::infer, 0.4, 2);
  REQUIRE(a.outputs.size() == 6);
  for (std::size_t t = 0; t < a.outputs.size(); ++t)
    CHECK(a.outputs[t] == b.outputs[t]);  // infer ignores dropout and seed

  const auto c = lstm::forward_sequence(net, window, lstm::Mode::train, 0.0, 3);
  for (std::size_t t = 0; t < a.outputs.size(); ++t)
    CHECK(a.outputs[t] == c.outputs[t]);  // dropout 0 matches infer

  const std::vector<VectorXd> empty;
  CHECK_THROWS_AS(lstm::forward_sequence(net, empty, lstm::Mode::infer, 0.0, 1),
                  std::invalid_argument);
}

TEST_CASE("hidden outputs stay inside the unit box") {
  Network net = Network::make(3, std::vector<int>{5, 4}, 7);
  for (auto& layer : net.layers) layer.w *= 25.0;  // push toward saturation
  const auto window = random_window(12, 3, 21);
  auto fwd = lstm::forward_sequence(net, window, lstm::Mode::infer, 0.0, 0);
  for (const auto& step : fwd.cache.cells)
    for (const auto& cell : step) {
      const VectorXd h = cell.gate_o.cwiseProduct(cell.tanh_c);
      CHECK(h.cwiseAbs().maxCoeff() <= 1.0);
    }
}

TEST_CASE("bptt matches central finite differences") {
  // 2-layer network, input 3, hidden sizes 4 and 3, 5-step window.
  Network net = Network::make(3, std::vector<int>{4, 3}, 1234);
  const auto window = random_window(5, 3, 55);
  std::vector<double> targets{1.0, 0.0, 1.0, 1.0, 0.0};
  const double worst = max_gradcheck_error(net, window, targets);
  CHECK(worst < 1e-4);
}

TEST_CASE("bptt gradcheck with dropout masks cached from training mode") {
  Network net = Network::make(2, std::vector<int>{4, 3}, 77);
  const auto window = random_window(5, 2, 88);
  const std::vector<double> targets{0.0, 1.0, 1.0, 0.0, 1.0};
  const std::vector<double> weights(window.size(), 1.0);

  // With a fixed dropout mask the analytic gradient must match finite
  // differences of the masked forward pass; rebuild the mask by seed.
  auto fwd = lstm::forward_sequence(net, window, lstm::Mode::train, 0.3, 99);
  auto grads = lstm::backward_bptt(net, fwd.cache, targets, weights);

  const double h = 1e-5;
  double worst = 0.0;
  auto loss_with_mask = [&]() {
    auto f = lstm::forward_sequence(net, window, lstm::Mode::train, 0.3, 99);
    return lstm::sequence_loss(f.outputs, targets, weights);
  };
  auto& layer = net.layers[0];
  for (int r = 0; r < layer.w.rows(); r += 3)
    for (int c = 0; c < layer.w.cols(); c += 2) {
      const double saved = layer.w(r, c);
      layer.w(r, c) = saved + h;
      const double up = loss_with_mask();
      layer.w(r, c) = saved - h;
      const double down = loss_with_mask();
      layer.w(r, c) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads.dw[0](r, c);
      const double denom =
          std::max({1e-4, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients vanish at the loss minimum and scale with the residual") {
  Network net = Network::make(2, std::vector<int>{3}, 5);
  const auto window = random_window(4, 2, 31);
  const std::vector<double> weights(window.size(), 1.0);
  auto fwd = lstm::forward_sequence(net, window, lstm::Mode::train, 0.0, 1);

  // Targets equal to the outputs: the loss is at its minimum.
  std::vector<double> exact(fwd.outputs.begin(), fwd.outputs.end());
  auto zero = lstm::backward_bptt(net, fwd.cache, exact, weights);
  CHECK(zero.squared_norm() == doctest::Approx(0.0));

  // Doubling every residual doubles every gradient.
  std::vector<double> t1(window.size()), t2(window.size());
  for (std::size_t i = 0; i < window.size(); ++i) {
    t1[i] = fwd.outputs[i] - 0.1 * (i + 1);
    t2[i] = fwd.outputs[i] - 0.2 * (i + 1);
  }
  auto g1 = lstm::backward_bptt(net, fwd.cache, t1, weights);
  auto g2 = lstm::backward_bptt(net, fwd.cache, t2, weights);
  for (std::size_t l = 0; l < g1.dw.size(); ++l)
    CHECK((g2.dw[l] - 2.0 * g1.dw[l]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g2.readout_dw - 2.0 * g1.readout_dw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam single step and fixed point") {
  Network net = Network::make(1, std::vector<int>{1}, 3);
  lstm::AdamConfig cfg;
  auto state = lstm::AdamState::zero_like(net);

  // Zero gradient leaves parameters untouched.
  auto zero = lstm::Gradients::zero_like(net);
  const Network before = net;
  lstm::adam_step(net, zero, state, cfg);
  CHECK((net.layers[0].w - before.layers[0].w).cwiseAbs().maxCoeff() == 0.0);
  CHECK(net.readout.b == before.readout.b);

  // Unit gradient at t = 1 moves every parameter by about -lr.
  Network net2 = Network::make(1, std::vector<int>{1}, 3);
  auto state2 = lstm::AdamState::zero_like(net2);
  auto ones = lstm::Gradients::zero_like(net2);
  for (auto& m : ones.dw) m.setOnes();
  for (auto& v : ones.db) v.setOnes();
  ones.readout_dw.setOnes();
  ones.readout_db = 1.0;
  const double w_before = net2.layers[0].w(0, 0);
  lstm::adam_step(net2, ones, state2, cfg);
  const double expected = -cfg.learning_rate / (1.0 + cfg.epsilon);
  CHECK(net2.layers[0].w(0, 0) - w_before ==
        doctest::Approx(expected).epsilon(1e-9));

  // Constant gradients drive the per-step update magnitude toward lr.
  double prev = net2.layers[0].w(0, 0);
  double step = 0.0;
  for (int t = 0; t < 500; ++t) {
    lstm::adam_step(net2, ones, state2, cfg);
    step = net2.layers[0].w(0, 0) - prev;
    prev = net2.layers[0].w(0, 0);
  }
  CHECK(std::abs(step) == doctest::Approx(cfg.learning_rate).epsilon(1e-3));
}

TEST_CASE("training descends, is deterministic, and aborts on divergence") {
  // Alternating activity pattern the network can memorize.
  std::vector<std::uint8_t> series;
  for (int i = 0; i < 80; ++i) series.push_back(i % 2);
  std::vector<std::vector<VectorXd>> windows;
  std::vector<double> targets;
  const int unroll = 8;
  for (std::size_t k = 0; k + unroll < series.size(); ++k) {
    std::vector<VectorXd> window;
    for (int i = 0; i < unroll; ++i) {
      VectorXd x(1);
      x(0) = series[k + i];
      window.push_back(x);
    }
    windows.push_back(window);
    targets.push_back(series[k + unroll]);
  }

  lstm::TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 123;
  Network net = Network::make(1, std::vector<int>{6}, 9);
  const auto history = lstm::train(net, windows, targets, cfg);
  REQUIRE(history.size() == 10);
  CHECK(history.back() < history.front());

  Network net_again = Network::make(1, std::vector<int>{6}, 9);
  const auto repeat = lstm::train(net_again, windows, targets, cfg);
  for (std::size_t i = 0; i < history.size(); ++i)
    CHECK(history[i] == repeat[i]);

  // Zero learning rate freezes the loss across epochs.
  lstm::TrainConfig frozen = cfg;
  frozen.epochs = 4;
  frozen.adam.learning_rate = 0.0;
  Network net3 = Network::make(1, std::vector<int>{6}, 9);
  const auto flat = lstm::train(net3, windows, targets, frozen);
  for (std::size_t i = 1; i < flat.size(); ++i)
    CHECK(flat[i] == doctest::Approx(flat[0]).epsilon(1e-12));

  // An absurd learning rate must abort, not return NaN.
  lstm::TrainConfig wild = cfg;
  wild.adam.learning_rate = 1e300;
  wild.clip_norm = 0.0;
  wild.epochs = 50;
  Network net4 = Network::make(1, std::vector<int>{6}, 9);
  CHECK_THROWS_AS(lstm::train(net4, windows, targets, wild),
                  std::runtime_error);
}

TEST_CASE("checkpoint round trip preserves the forward pass") {
  Network net = Network::make(2, std::vector<int>{4, 3}, 17);
  std::stringstream buffer;
  lstm::save_checkpoint(net, buffer);
  Network loaded = lstm::load_checkpoint(buffer);
  const auto window = random_window(5, 2, 63);
  auto a = lstm::forward_sequence(net, window, lstm::Mode::infer, 0.0, 0);
  auto b = lstm::forward_sequence(loaded, window, lstm::Mode::infer, 0.0, 0);
  for (std::size_t t = 0; t < a.outputs.size(); ++t)
    CHECK(a.outputs[t] == b.outputs[t]);
}

TEST_CASE("plain rnn reference forward step") {
  Eigen::MatrixXd w_hh(2, 2), w_xh(2, 1);
  w_hh << 0.5, 0.0, 0.0, 0.5;
  w_xh << 1.0, -1.0;
  VectorXd h(2), x(1);
  h << 0.2, -0.4;
  x << 0.3;
  const VectorXd out = lstm::rnn_reference_step(w_hh, w_xh, h, x);
  CHECK(out(0) == doctest::Approx(std::tanh(0.1 + 0.3)));
  CHECK(out(1) == doctest::Approx(std::tanh(-0.2 - 0.3)));
}
