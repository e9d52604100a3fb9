#include <doctest.h>

#include <sstream>

#include "modcascade/fixturegen.hpp"
#include "modcascade/replay.hpp"
#include "support.hpp"

using namespace modcascade;

namespace {

FixtureSpec small_spec() {
  FixtureSpec s;
  s.seed = 11;
  s.text_visual = {4, 3};
  s.text_only = {2, 1};
  s.cascade.final_.full = {8, 2, 6, 2};
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic for a seed") {
  const auto spec = testsupport::load_spec("benchmark_spec.json");
  const auto a = generate_fixture(spec);
  const auto b = generate_fixture(spec);
  CHECK(a.manifest == b.manifest);
  CHECK(write_manifest(a.manifest) == write_manifest(b.manifest));
  CHECK(write_replay(a.replay) == write_replay(b.replay));

  auto other = spec;
  other.seed += 1;
  CHECK(write_manifest(generate_fixture(other).manifest) != write_manifest(a.manifest));
}

TEST_CASE("generated replay data survives a write/load cycle") {
  const auto g = generate_fixture(small_spec());
  std::istringstream in(write_replay(g.replay));
  const auto loaded = load_replay(in);
  CHECK(write_replay(*loaded.data) == write_replay(g.replay));
  for (const auto& r : g.manifest.records) CHECK(g.replay.knows_image(r.id));
}

TEST_CASE("spec parsing") {
  const auto s = parse_fixture_spec(R"({
    "name": "tiny", "seed": 3, "text_visual": [1, 1], "text_only": [0, 0],
    "cascade": {"final": {"full": [1, 1, 1, 1]}}
  })");
  CHECK(s.name == "tiny");
  CHECK(s.seed == 3u);
  CHECK(s.cascade.final_.full == ConfusionMatrix{1, 1, 1, 1});
  CHECK_FALSE(s.cascade.stage1.has_value());
  CHECK(s.cascade.vision_only_name == "Cascade Stage 1");

  try {
    parse_fixture_spec("{\"cascade\": 3");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
  CHECK_THROWS_AS(parse_fixture_spec(R"({"cascade": {"final": {"full": [1, 2, 3]}}})"), Error);
}

TEST_CASE("unrealizable specs are rejected") {
  auto expect_invalid = [](const FixtureSpec& s) {
    try {
      generate_fixture(s);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  };
  auto s = small_spec();
  s.text_only = {5, 0};  // more than text+visual
  expect_invalid(s);

  s = small_spec();
  s.cascade.stage1 = SubsetTargets{ConfusionMatrix{9, 2, 6, 2}, std::nullopt, std::nullopt};
  expect_invalid(s);

  s = small_spec();
  s.cascade.final_.text_only = ConfusionMatrix{3, 0, 1, 0};  // three unsafe, subset has two
  expect_invalid(s);

  s = small_spec();
  s.routing = RoutingConfig{0.5, 0.5, true};
  s.route_all = false;
  expect_invalid(s);

  s = small_spec();
  BaselineSpec b;
  b.name = "x";
  b.threshold = 0.0;
  b.targets.full = {8, 2, 6, 2};
  s.baselines.push_back(b);
  expect_invalid(s);
}

TEST_CASE("subset targets are realized") {
  auto s = small_spec();
  s.cascade.final_.text_visual = ConfusionMatrix{3, 1, 2, 1};
  s.cascade.final_.text_only = ConfusionMatrix{2, 0, 1, 0};
  const auto g = generate_fixture(s);
  const auto replay = make_replay_backends(g.replay);
  ConfusionMatrix tv, to, full;
  for (const auto& r : g.manifest.records) {
    const auto d = moderate(ImageRef{r.id, std::nullopt}, replay.backends, s.routing, Regime::Multimodal);
    full = accumulate(d.final_verdict, r.label, full);
    if (r.text_present) tv = accumulate(d.final_verdict, r.label, tv);
    if (r.text_primary) to = accumulate(d.final_verdict, r.label, to);
  }
  CHECK(full == ConfusionMatrix{8, 2, 6, 2});
  CHECK(tv == ConfusionMatrix{3, 1, 2, 1});
  CHECK(to == ConfusionMatrix{2, 0, 1, 0});
}
