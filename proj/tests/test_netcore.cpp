#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hetloc/errors.hpp"
#include "hetloc/netcore.hpp"
#include "support.hpp"

using namespace hetloc;
using namespace hetloc::net;
using hetloc::testing::bitwise_equal;
using hetloc::testing::same_trunk;

namespace {

MlpConfig small_config(std::vector<std::size_t> sizes, std::uint64_t seed) {
  MlpConfig c;
  c.layer_sizes = std::move(sizes);
  c.seed = seed;
  return c;
}

// Two clusters either side of the line x0 + x1 = 0.
Dataset toy_set() {
  Dataset d{TowerInventory({"u", "v"}), Grid({0, 0}, 1, 2, 1), FeatureMode::raw, {}, 0};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.3, 2.0), jitter(-0.25, 0.25);
  for (int i = 0; i < 20; ++i) {
    const std::size_t label = i % 2;
    const double sign = label == 0 ? -1.0 : 1.0;
    const double a = u(rng);
    const double j = jitter(rng);
    d.samples.push_back({{sign * a + j, sign * a - j}, label, "toy", {}});
  }
  return d;
}

// Plain logistic regression by full-batch gradient descent; reaching zero
// training errors certifies the set is linearly separable.
bool separable_by_logistic_regression(const Dataset& d) {
  double w0 = 0, w1 = 0, b = 0;
  for (int it = 0; it < 5000; ++it) {
    double g0 = 0, g1 = 0, gb = 0;
    for (const auto& s : d.samples) {
      const double z = w0 * s.features[0] + w1 * s.features[1] + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double e = p - static_cast<double>(s.label);
      g0 += e * s.features[0], g1 += e * s.features[1], gb += e;
    }
    w0 -= 0.1 * g0, w1 -= 0.1 * g1, b -= 0.1 * gb;
  }
  for (const auto& s : d.samples) {
    const double z = w0 * s.features[0] + w1 * s.features[1] + b;
    if ((z > 0) != (s.label == 1)) return false;
  }
  return true;
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST_CASE("init_model shapes follow the layer sizes") {
  const auto m = init_model(small_config({25, 256, 128, 64, 20}, 1));
  REQUIRE(m.trunk.size() == 3);
  CHECK(m.trunk[0].inputs == 25);
  CHECK(m.trunk[0].outputs == 256);
  CHECK(m.trunk[1].weights.size() == 256 * 128);
  CHECK(m.trunk[2].outputs == 64);
  const auto& h = m.head(kDefaultHead);
  CHECK(h.inputs == 64);
  CHECK(h.outputs == 20);
  CHECK(init_model(small_config({16, 256, 128, 64, 675}, 1)).head(kDefaultHead).outputs == 675);
}

TEST_CASE("init_model is deterministic per seed and Glorot-bounded") {
  const auto a = init_model(small_config({10, 32, 16, 5}, 42));
  const auto b = init_model(small_config({10, 32, 16, 5}, 42));
  const auto c = init_model(small_config({10, 32, 16, 5}, 43));
  CHECK(same_trunk(a, b));
  CHECK(bitwise_equal(a.head(kDefaultHead), b.head(kDefaultHead)));
  CHECK_FALSE(same_trunk(a, c));
  const double limit = std::sqrt(6.0 / (10 + 32));
  for (double w : a.trunk[0].weights) CHECK(std::abs(w) <= limit);
  for (double v : a.trunk[0].bias) CHECK(v == 0.0);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(init_model(small_config({10, 5}, 0)), ConfigError);
  CHECK_THROWS_AS(init_model(small_config({10, 0, 5}, 0)), ConfigError);
  auto c = small_config({10, 8, 5}, 0);
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(init_model(c), ConfigError);
  c.dropout_rate = 0.1;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(init_model(c), ConfigError);
  c.learning_rate = 0.01;
  c.batch_size = 0;
  CHECK_THROWS_AS(init_model(c), ConfigError);
}

TEST_CASE("head lookup errors name the registered heads") {
  auto m = init_model(small_config({4, 8, 3}, 0));
  add_head(m, "phoneB", 3, 9);
  CHECK(m.head_names() == std::vector<std::string>{"default", "phoneB"});
  try {
    (void)m.head("phoneC");
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("phoneC") != std::string::npos);
    CHECK(msg.find("phoneB") != std::string::npos);
    CHECK(msg.find("default") != std::string::npos);
  }
}

TEST_CASE("zero weights give a uniform distribution") {
  auto m = init_model(small_config({6, 8, 4, 5}, 3));
  for (auto& l : m.trunk) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  auto& h = m.head(kDefaultHead);
  std::fill(h.weights.begin(), h.weights.end(), 0.0);
  const auto p = predict_proba(m, std::vector<double>{1, -2, 3, 0, 5, -7});
  for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("softmax sums to one and eval mode is deterministic") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = init_model(small_config({7, 12, 9, 6}, static_cast<std::uint64_t>(trial)));
    auto x = random_input(rng, 7);
    for (double& v : x) v *= 40.0;
    const auto p = predict_proba(m, x);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
    if (trial < 10) CHECK(predict_proba(m, x) == p);
  }
}

TEST_CASE("forward validates its inputs") {
  const auto m = init_model(small_config({4, 8, 3}, 0));
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, 3}), ArgumentError);
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, 3, 4}, kDefaultHead, Mode::train),
                  ArgumentError);
  CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2, 3, 4}, "nope"), LookupError);
  Rng rng(1);
  const auto pass = forward(m, std::vector<double>{1, 2, 3, 4}, kDefaultHead, Mode::train, &rng);
  CHECK(pass.activations.size() == 2);
  CHECK(pass.probabilities.size() == 3);
}

TEST_CASE("dropout in train mode zeroes and rescales hidden units") {
  auto c = small_config({4, 400, 3}, 0);
  c.dropout_rate = 0.25;
  const auto m = init_model(c);
  const std::vector<double> x{0.5, -1, 2, 0.1};
  const auto eval = forward(m, x);
  Rng rng(2);
  const auto train = forward(m, x, kDefaultHead, Mode::train, &rng);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < 400; ++i) {
    const double e = eval.activations[1][i], t = train.activations[1][i];
    if (t == 0.0) {
      ++dropped;
    } else {
      CHECK(t == doctest::Approx(e / 0.75));
    }
  }
  CHECK(dropped > 60);
  CHECK(dropped < 140);
}

TEST_CASE("gradient check on small models") {
  std::mt19937_64 rng(21);
  const auto m = init_model(small_config({4, 8, 3}, 5));
  const auto x = random_input(rng, 4);
  CHECK(gradient_check(m, x, 2, kDefaultHead, 1000) < 1e-4);
  CHECK(gradient_check(m, x, 0, kDefaultHead, 50, 3) == gradient_check(m, x, 0, kDefaultHead, 50, 3));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto big = init_model(small_config({25, 32, 16, 8, 20}, s));
    CHECK(gradient_check(big, random_input(rng, 25), s % 20, kDefaultHead, 300, s) < 1e-4);
  }
}

TEST_CASE("zero input leaves first-layer weights untouched") {
  auto c = small_config({3, 6, 2}, 4);
  c.standardize_inputs = false;
  c.dropout_rate = 0.0;
  auto m = init_model(c);
  const auto before = m.trunk[0];
  Dataset d{TowerInventory({"a", "b", "c"}), Grid({0, 0}, 1, 2, 1), FeatureMode::raw,
            {{{0, 0, 0}, 1, "d", {}}, {{0, 0, 0}, 0, "d", {}}}, 0};
  const auto prepared = prepare(m, d);
  Rng rng(0);
  const std::vector<std::size_t> batch{0, 1};
  sgd_step(m, prepared, batch, kDefaultHead, {0.5, 0.0}, rng);
  CHECK(bitwise_equal(m.trunk[0].weights, before.weights));
  CHECK_FALSE(bitwise_equal(m.trunk[0].bias, before.bias));
}

TEST_CASE("training separates a linearly separable toy set") {
  const auto d = toy_set();
  REQUIRE(separable_by_logistic_regression(d));
  auto c = small_config({2, 16, 8, 2}, 12);
  c.batch_size = 5;
  c.epochs = 500;
  auto m = init_model(c);
  const auto log = train(m, d);
  REQUIRE(log.epoch_loss.size() == 500);
  CHECK(log.epoch_loss.back() <= log.epoch_loss.front());
  CHECK(accuracy(m, d) >= 0.95);
  CHECK(m.trained());
  CHECK(m.head_samples.at("default") == 20);
}

TEST_CASE("frozen layers do not move") {
  const auto d = toy_set();
  auto m = init_model(small_config({2, 8, 2}, 1));
  set_trunk_trainable(m, false);
  m.head(kDefaultHead).trainable = false;
  const auto before = m;
  train(m, d, kDefaultHead, {.epochs = 20});
  CHECK(same_trunk(m, before));
  CHECK(bitwise_equal(m.head(kDefaultHead), before.head(kDefaultHead)));

  m.head(kDefaultHead).trainable = true;
  train(m, d, kDefaultHead, {.epochs = 5});
  CHECK(same_trunk(m, before));
  CHECK_FALSE(bitwise_equal(m.head(kDefaultHead), before.head(kDefaultHead)));
}

TEST_CASE("training is deterministic per seed") {
  const auto d = toy_set();
  auto c = small_config({2, 8, 6, 2}, 77);
  c.epochs = 30;
  auto a = init_model(c), b = init_model(c);
  const auto la = train(a, d), lb = train(b, d);
  CHECK(bitwise_equal(la.epoch_loss, lb.epoch_loss));
  CHECK(same_trunk(a, b));
  CHECK(bitwise_equal(a.head(kDefaultHead), b.head(kDefaultHead)));
}

TEST_CASE("without shuffling batches follow dataset order") {
  const auto d = toy_set();
  auto c = small_config({2, 5, 2}, 4);
  c.shuffle = false;
  c.dropout_rate = 0.0;
  c.batch_size = 6;
  auto trained = init_model(c);
  train(trained, d, kDefaultHead, {.epochs = 2});

  auto manual = init_model(c);
  fit_input_scaler(manual, d);
  const auto prepared = prepare(manual, d);
  Rng rng = training_rng(c);
  for (int e = 0; e < 2; ++e) {
    for (std::size_t i = 0; i < 20; i += 6) {
      std::vector<std::size_t> batch;
      for (std::size_t r = i; r < std::min<std::size_t>(i + 6, 20); ++r) batch.push_back(r);
      sgd_step(manual, prepared, batch, kDefaultHead, {c.learning_rate, 0.0}, rng);
    }
  }
  CHECK(same_trunk(trained, manual));
  CHECK(bitwise_equal(trained.head(kDefaultHead), manual.head(kDefaultHead)));
}

TEST_CASE("train rejects bad data") {
  auto m = init_model(small_config({2, 4, 2}, 0));
  Dataset empty{TowerInventory({"u", "v"}), Grid({0, 0}, 1, 2, 1), FeatureMode::raw, {}, 0};
  CHECK_THROWS_AS(train(m, empty), ArgumentError);
  auto d = toy_set();
  d.samples[3].label = 2;
  CHECK_THROWS_AS(train(m, d), ArgumentError);
  auto wide = init_model(small_config({3, 4, 2}, 0));
  CHECK_THROWS_AS(train(wide, toy_set()), ArgumentError);
  train(m, toy_set(), kDefaultHead, {.epochs = 1});
  auto diff = toy_set();
  diff.mode = FeatureMode::difference;
  diff.inventory = TowerInventory({"a", "b", "c"});
  for (auto& s : diff.samples) s.features.resize(3);
  auto m3 = init_model(small_config({3, 4, 2}, 0));
  train(m3, diff, kDefaultHead, {.epochs = 1});
  auto rawer = diff;
  rawer.mode = FeatureMode::raw;
  CHECK_THROWS_AS(train(m3, rawer, kDefaultHead, {.epochs = 1}), ArgumentError);
}

TEST_CASE("input standardization uses first training set statistics") {
  const auto d = toy_set();
  auto m = init_model(small_config({2, 4, 2}, 0));
  train(m, d, kDefaultHead, {.epochs = 1});
  REQUIRE(m.scaler.fitted());
  double mean0 = 0;
  for (const auto& s : d.samples) mean0 += s.features[0];
  CHECK(m.scaler.mean[0] == doctest::Approx(mean0 / 20));
  const auto scaler = m.scaler;
  auto shifted = d;
  for (auto& s : shifted.samples) s.features[0] += 100;
  train(m, shifted, kDefaultHead, {.epochs = 1});
  CHECK(m.scaler == scaler);
}

TEST_CASE("decode_location") {
  const Grid g({0, 0}, 100, 2, 2);
  std::vector<double> p(4, 0.0);
  p[3] = 1.0;
  CHECK(decode_location(p, g, DecodeStrategy::argmax) == Point{150, 150});
  CHECK(decode_location(p, g, DecodeStrategy::center_of_mass) == Point{150, 150});

  const Grid line({-1, -1}, 2, 2, 1);
  const Point com = decode_location(std::vector<double>{0.5, 0.5}, line, DecodeStrategy::center_of_mass);
  CHECK(com.x == doctest::Approx(1.0));
  CHECK(com.y == doctest::Approx(0.0));

  const Grid six({0, 0}, 10, 3, 2);
  const std::vector<double> tie{0.1, 0.0, 0.35, 0.0, 0.2, 0.35};
  CHECK(decode_location(tie, six, DecodeStrategy::argmax) == six.cell_center(2));
  CHECK_THROWS_AS(decode_location(tie, g, DecodeStrategy::argmax), ArgumentError);
  CHECK(parse_decode_strategy("center_of_mass") == DecodeStrategy::center_of_mass);
  CHECK_THROWS_AS(parse_decode_strategy("mode"), ArgumentError);
}
