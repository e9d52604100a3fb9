#include <doctest.h>

#include <thread>

#include "modcascade/adapters.hpp"
#include "support.hpp"

using namespace modcascade;
using testsupport::span;

TEST_CASE("spans sort top-to-bottom then left-to-right, stably") {
  std::vector<OcrSpan> spans = {span("c", 0.5, 0.1), span("b", 0.1, 0.6), span("a", 0.1, 0.2),
                                span("a2", 0.1, 0.2)};
  sort_spans(spans);
  std::vector<std::string> order;
  for (const auto& s : spans) order.push_back(s.text);
  CHECK(order == std::vector<std::string>{"a", "a2", "b", "c"});
}

TEST_CASE("reasoner response parsing") {
  SUBCASE("well-formed, multi-line analysis") {
    const auto v = parse_reasoner_response(
        "Verdict: Unsafe\nAnalysis: Text solicits images\nfrom a minor.\nRecommendation: Block\n");
    CHECK(v.verdict == Verdict::Unsafe);
    CHECK(v.analysis == "Text solicits images from a minor.");
    CHECK(v.recommendation == Recommendation::Block);
  }
  SUBCASE("keys are case-insensitive and warnings parse") {
    const auto v = parse_reasoner_response(
        "verdict: safe\nANALYSIS: Swimwear advert.\nrecommendation: Allow with warning");
    CHECK(v.verdict == Verdict::Safe);
    CHECK(v.recommendation == Recommendation::AllowWithWarning);
  }
  SUBCASE("missing key") {
    CHECK_THROWS_AS(parse_reasoner_response("Verdict: Safe\nRecommendation: Allow"), Error);
    try {
      parse_reasoner_response("Verdict: Safe\nRecommendation: Allow");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedResponse);
    }
  }
  SUBCASE("unknown verdict or contradictory recommendation") {
    for (const char* text : {"Verdict: Maybe\nAnalysis: x\nRecommendation: Allow",
                             "Verdict: Unsafe\nAnalysis: x\nRecommendation: Allow",
                             "Verdict: Safe\nAnalysis: x\nRecommendation: Delete"}) {
      try {
        parse_reasoner_response(text);
        FAIL("expected MalformedResponse");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedResponse);
      }
    }
  }
}

TEST_CASE("completion reasoner sends the rendered payload and parses the reply") {
  std::string seen;
  CompletionReasoner r([&](const std::string& prompt) {
    seen = prompt;
    return std::string("Verdict: Safe\nAnalysis: Benign.\nRecommendation: Allow");
  });
  ReasonerInput in;
  in.rendered_payload = "PAYLOAD";
  CHECK(r.reason(in).verdict == Verdict::Safe);
  CHECK(seen == "PAYLOAD");

  CompletionReasoner failing([](const std::string&) -> std::string {
    throw std::runtime_error("connection refused");
  });
  try {
    failing.reason(in);
    FAIL("expected BackendFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendFailure);
  }
}

TEST_CASE("keyword reasoner flags text and labels") {
  KeywordReasoner r({"Send Pics"}, {"exposed_torso"});
  ReasonerInput clean;
  clean.extracted_text = {"happy birthday"};
  CHECK(r.reason(clean).verdict == Verdict::Safe);

  ReasonerInput text_hit;
  text_hit.extracted_text = {"please SEND PICS now"};
  const auto v = r.reason(text_hit);
  CHECK(v.verdict == Verdict::Unsafe);
  CHECK(v.recommendation == Recommendation::Block);
  CHECK(v.analysis == "Flagged signals: text 'send pics'.");

  ReasonerInput label_hit;
  label_hit.object_labels = {{"exposed_torso", 0.8}};
  CHECK(r.reason(label_hit).analysis == "Flagged signals: object 'exposed_torso' (0.80).");
}

TEST_CASE("call counting and simulated costs wrap every backend") {
  testsupport::MapBackends m;
  m.probability["a"] = 0.5;
  CallCounts counts;
  FakeClock clock;
  auto b = with_call_counts(testsupport::make_backends(m), counts);
  b = with_simulated_costs(b, CallCosts{1.0, 2.0, 3.0, 4.0}, clock);

  const ImageRef img{"a", std::nullopt};
  b.classifier->classify(img);
  b.detector->detect(img);
  b.text_extractor->extract_text(img);
  b.reasoner->reason(ReasonerInput{});
  CHECK(counts.classify == 1);
  CHECK(counts.detect == 1);
  CHECK(counts.extract_text == 1);
  CHECK(counts.reason == 1);
  CHECK(clock.now() == from_ms(10.0));
}

TEST_CASE("fake clock is exact in integer nanoseconds") {
  FakeClock clock;
  for (int i = 0; i < 1000; ++i) clock.advance_ms(0.1);
  CHECK(clock.now().count() == 100'000'000);
  CHECK(to_ms(clock.now()) == 100.0);
}

namespace {

class SlowCountingClassifier final : public Classifier {
 public:
  explicit SlowCountingClassifier(std::atomic<int>& active, std::atomic<int>& overlap)
      : active_(active), overlap_(overlap) {}
  ClassifierOutput classify(const ImageRef&) const override {
    if (++mine_ > 1) ++overlap_;
    ++active_;
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    --active_;
    --mine_;
    return {0.5};
  }

 private:
  std::atomic<int>& active_;
  std::atomic<int>& overlap_;
  mutable std::atomic<int> mine_{0};
};

}  // namespace

TEST_CASE("instance pools serialize calls per instance") {
  std::atomic<int> active{0}, overlap{0};
  std::vector<std::unique_ptr<Classifier>> instances;
  for (int i = 0; i < 2; ++i) instances.push_back(std::make_unique<SlowCountingClassifier>(active, overlap));
  auto pooled = make_pooled_classifier(std::move(instances));

  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i) pooled->classify(ImageRef{"x", std::nullopt});
    });
  }
  for (auto& t : threads) t.join();
  CHECK(overlap == 0);

  CHECK_THROWS_AS(make_pooled_reasoner({}), Error);
}
