#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hetloc/errors.hpp"
#include "hetloc/features.hpp"
#include "hetloc/worldgen.hpp"

using namespace hetloc;
using namespace hetloc::worldgen;

namespace {

WorldConfig quiet_config(std::uint64_t seed) {
  WorldConfig c;
  c.seed = seed;
  c.shadowing_sigma_db = 0.0;
  return c;
}

DeviceProfile clean(std::string id, double gain = 1.0, double offset = 0.0) {
  return {std::move(id), gain, offset, 0.0, 0.0};
}

}  // namespace

TEST_CASE("generate_world is deterministic and keeps towers in the area") {
  WorldConfig c;
  c.seed = 31;
  const auto a = generate_world(c), b = generate_world(c);
  REQUIRE(a.towers.size() == 25);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(a.towers[i].id == b.towers[i].id);
    CHECK(a.towers[i].position == b.towers[i].position);
    CHECK(a.towers[i].position.x >= 0.0);
    CHECK(a.towers[i].position.x <= 500.0);
    CHECK(a.towers[i].position.y >= 0.0);
    CHECK(a.towers[i].position.y <= 400.0);
    CHECK(a.site.inventory.id(i) == a.towers[i].id);
  }
  CHECK(a.site.grid.cols() == 5);
  CHECK(a.site.grid.rows() == 4);
  CHECK(a.site.grid.cell_count() == 20);
  c.seed = 32;
  CHECK_FALSE(generate_world(c).towers[0].position == a.towers[0].position);
}

TEST_CASE("world config validation") {
  WorldConfig c;
  c.tower_count = 1;
  CHECK_THROWS_AS(generate_world(c), ConfigError);
  c = {};
  c.shadowing_sigma_db = -1;
  CHECK_THROWS_AS(generate_world(c), ConfigError);
  c = {};
  c.max_heard = 8;
  CHECK_THROWS_AS(generate_world(c), ConfigError);
  CHECK_THROWS_AS(generate_scans(generate_world({}), {""}, 1, 0), ConfigError);
  CHECK_THROWS_AS(generate_scans(generate_world({}), {"x", -1.0}, 1, 0), ConfigError);
  CHECK_THROWS_AS(generate_scans(generate_world({}), {"x"}, 0, 0), ArgumentError);
}

TEST_CASE("reading at the reference distance is the transmit power") {
  auto w = generate_world(quiet_config(1));
  w.towers[0].position = {200, 200};
  const auto s = sample_scan(w, clean("d"), {201, 200}, kFirstTimestamp);
  REQUIRE_FALSE(s.readings.empty());
  CHECK(s.readings.front().tower_id == w.towers[0].id);
  CHECK(s.readings.front().rss_dbm == -40.0);
  CHECK(path_loss_rss(w.config, 0.2) == -40.0);
}

TEST_CASE("RSS strictly decreases with distance without shadowing or noise") {
  const WorldConfig c = quiet_config(1);
  double last = path_loss_rss(c, 1.0);
  for (double d = 1.5; d < 2000.0; d *= 1.1) {
    const double r = path_loss_rss(c, d);
    CHECK(r < last);
    last = r;
  }
}

TEST_CASE("a scan keeps the 7 strongest towers") {
  WorldConfig c;
  c.seed = 5;
  c.shadowing_sigma_db = 0.0;
  c.hearability_floor_dbm = -1000.0;
  const auto w = generate_world(c);
  const Point p{137.5, 241.0};
  const auto s = sample_scan(w, clean("d"), p, kFirstTimestamp);
  REQUIRE(s.readings.size() == 7);

  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& t : w.towers) {
    const double d = std::max(1.0, std::hypot(p.x - t.position.x, p.y - t.position.y));
    oracle.emplace_back(-40.0 - 30.0 * std::log10(d), t.id);
  }
  std::sort(oracle.begin(), oracle.end(), std::greater<>());
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(s.readings[i].tower_id == oracle[i].second);
    CHECK(s.readings[i].rss_dbm == doctest::Approx(oracle[i].first).epsilon(1e-12));
  }
}

TEST_CASE("hearability floor drops weak towers but keeps the strongest") {
  WorldConfig c = quiet_config(7);
  c.hearability_floor_dbm = -60.0;
  const auto w = generate_world(c);
  std::size_t singles = 0;
  for (double x = 10; x < 500; x += 40) {
    for (double y = 10; y < 400; y += 40) {
      const auto s = sample_scan(w, clean("d"), {x, y}, kFirstTimestamp);
      CHECK(s.readings.size() >= 1);
      for (std::size_t i = 1; i < s.readings.size(); ++i) CHECK(s.readings[i].rss_dbm >= -60.0);
      if (s.readings.size() == 1) ++singles;
    }
  }
  CHECK(singles > 0);
  CHECK_THROWS_AS(sample_scan(w, clean("d"), {-1, 0}, kFirstTimestamp), ArgumentError);
}

TEST_CASE("an offset device reads exactly 10 dB above the reference device") {
  WorldConfig c;
  c.seed = 12;
  const auto w = generate_world(c);
  const DeviceProfile a{"A", 1.0, 0.0, 0.0, 0.0}, b{"B", 1.0, 10.0, 0.0, 0.0};
  const auto sa = generate_scans(w, a, 5, 77), sb = generate_scans(w, b, 5, 77);
  REQUIRE(sa.size() == sb.size());
  std::size_t co_heard = 0, heard_by_a = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    heard_by_a += sa[i].readings.size();
    CHECK(sa[i].timestamp == sb[i].timestamp);
    for (const auto& ra : sa[i].readings) {
      for (const auto& rb : sb[i].readings) {
        if (ra.tower_id != rb.tower_id) continue;
        ++co_heard;
        CHECK(std::abs((rb.rss_dbm - ra.rss_dbm) - 10.0) <= 1e-12);
      }
    }
  }
  // the louder device hears everything the reference device hears
  CHECK(co_heard == heard_by_a);
}

TEST_CASE("devices share shadowing at the same place and time") {
  WorldConfig c;
  c.seed = 2;
  const auto w = generate_world(c);
  const auto s1 = sample_scan(w, clean("A"), {222, 111}, kFirstTimestamp + 4);
  const auto s2 = sample_scan(w, clean("B"), {222, 111}, kFirstTimestamp + 4);
  const auto s3 = sample_scan(w, clean("A"), {222, 111}, kFirstTimestamp + 5);
  CHECK(s1.readings == s2.readings);
  CHECK_FALSE(s1.readings == s3.readings);
}

TEST_CASE("noiseless affine distortion is recovered by the calibration fit") {
  const auto w = generate_world(quiet_config(9));
  const auto master = generate_scans(w, clean("M"), 10, 3);
  const auto slave = generate_scans(w, clean("S", 0.85, -12.0), 10, 3);
  const auto pairs = features::calibration_pairs(master, slave, w.site.inventory);
  const auto map = features::fit_linear_map(pairs);
  for (const auto& fit : map.towers) {
    if (fit.identity_fallback) continue;
    // slave = 0.85 * master - 12  =>  master = slave / 0.85 + 12 / 0.85
    CHECK(std::abs(fit.slope - 1.0 / 0.85) < 1e-6);
    CHECK(std::abs(fit.intercept - 12.0 / 0.85) < 1e-6);
  }
}

TEST_CASE("datasets have K * samples_per_cell labelled samples") {
  WorldConfig c;
  c.seed = 1;
  const auto w = generate_world(c);
  const auto d = generate_dataset(w, {"A"}, 50, 4);
  REQUIRE(d.size() == 1000);
  std::vector<std::size_t> per_cell(20, 0);
  for (const auto& s : d.samples) {
    REQUIRE(s.label < 20);
    CHECK(s.label == d.grid.cell_of(s.position));
    CHECK(s.features.size() == 25);
    ++per_cell[s.label];
  }
  for (auto n : per_cell) CHECK(n == 50);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("paired seeds give timestamp-aligned scans for calibration pairing") {
  WorldConfig c;
  c.seed = 3;
  const auto w = generate_world(c);
  const auto a = generate_scans(w, {"A"}, 20, 99);
  const auto b = generate_scans(w, {"B", 0.9, 6.0, 2.0, 1.5}, 20, 99);
  const auto pairs = features::pair_by_timestamp(a, b, 2);
  CHECK(static_cast<double>(pairs.size()) >= 0.99 * static_cast<double>(b.size()));
  for (auto [i, j] : pairs) CHECK(a[i].position == b[j].position);
}

TEST_CASE("generated RSS stays inside the plausible range") {
  WorldConfig c;
  c.seed = 4;
  const auto w = generate_world(c);
  for (const auto& s : generate_scans(w, {"A"}, 10, 1)) {
    std::set<std::string> seen;
    for (const auto& r : s.readings) {
      CHECK(seen.insert(r.tower_id).second);
      CHECK(r.rss_dbm <= kMaxRssDbm + 15.0);
    }
  }
}
