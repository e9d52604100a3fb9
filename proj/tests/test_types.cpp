#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "modcascade/error.hpp"
#include "modcascade/types.hpp"

using namespace modcascade;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("verdict, recommendation and regime strings round-trip") {
  for (auto v : {Verdict::Safe, Verdict::Unsafe}) CHECK(parse_verdict(to_string(v)) == v);
  for (auto r : {Recommendation::Block, Recommendation::Review, Recommendation::AllowWithWarning,
                 Recommendation::Allow}) {
    CHECK(parse_recommendation(to_string(r)) == r);
  }
  for (auto r : {Regime::VisionOnly, Regime::Multimodal}) CHECK(parse_regime(to_string(r)) == r);
  CHECK(parse_recommendation("Allow with warning") == Recommendation::AllowWithWarning);
  CHECK(parse_verdict("UNSAFE") == Verdict::Unsafe);
  CHECK(code_of([] { parse_regime("regime3"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("box coordinates must be normalized and ordered") {
  CHECK_NOTHROW(validate(Box{0.0, 0.0, 1.0, 1.0}));
  CHECK_NOTHROW(validate(Box{0.5, 0.5, 0.5, 0.5}));
  CHECK(code_of([] { validate(Box{0.6, 0.0, 0.5, 1.0}); }) == ErrorCode::InvariantViolation);
  CHECK(code_of([] { validate(Box{0.0, 0.0, 1.2, 1.0}); }) == ErrorCode::InvariantViolation);
  CHECK(code_of([] { validate(Box{0.0, 0.7, 1.0, 0.2}); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("classifier probability lies in the unit interval") {
  CHECK_NOTHROW(validate(ClassifierOutput{0.0}));
  CHECK_NOTHROW(validate(ClassifierOutput{1.0}));
  CHECK(code_of([] { validate(ClassifierOutput{1.0000001}); }) == ErrorCode::InvariantViolation);
  CHECK(code_of([] { validate(ClassifierOutput{std::nan("")}); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("detections and spans carry content") {
  CHECK_NOTHROW(validate(Detection{"person", 0.9, Box{0, 0, 1, 1}}));
  CHECK(code_of([] { validate(Detection{"", 0.9, Box{0, 0, 1, 1}}); }) ==
        ErrorCode::InvariantViolation);
  CHECK(code_of([] { validate(Detection{"knife", 1.5, Box{0, 0, 1, 1}}); }) ==
        ErrorCode::InvariantViolation);
  CHECK_NOTHROW(validate(OcrSpan{"hello", Box{0, 0, 1, 1}}));
  CHECK(code_of([] { validate(OcrSpan{"  \t", Box{0, 0, 1, 1}}); }) ==
        ErrorCode::InvariantViolation);
}

TEST_CASE("recommendation must agree with verdict") {
  CHECK(recommendation_allowed(Verdict::Unsafe, Recommendation::Block));
  CHECK(recommendation_allowed(Verdict::Unsafe, Recommendation::Review));
  CHECK_FALSE(recommendation_allowed(Verdict::Unsafe, Recommendation::Allow));
  CHECK_FALSE(recommendation_allowed(Verdict::Unsafe, Recommendation::AllowWithWarning));
  CHECK_FALSE(recommendation_allowed(Verdict::Safe, Recommendation::Block));
  CHECK(recommendation_allowed(Verdict::Safe, Recommendation::Review));
  CHECK(recommendation_allowed(Verdict::Safe, Recommendation::AllowWithWarning));

  CHECK(code_of([] { validate(ReasonerVerdict{Verdict::Unsafe, "x", Recommendation::Allow}); }) ==
        ErrorCode::InvariantViolation);
  CHECK(code_of([] { validate(ReasonerVerdict{Verdict::Safe, "", Recommendation::Allow}); }) ==
        ErrorCode::InvariantViolation);
}

TEST_CASE("errors carry stage and line context") {
  const Error base(ErrorCode::BackendFailure, "timeout");
  const auto staged = base.with_stage(Stage::Stage2);
  CHECK(staged.code() == ErrorCode::BackendFailure);
  CHECK(staged.stage() == Stage::Stage2);
  CHECK(std::string(staged.what()) == "[stage2] timeout");

  const auto lined = Error(ErrorCode::ParseError, "bad json").with_line(7);
  CHECK(lined.line() == 7u);
  CHECK(std::string(lined.what()) == "line 7: bad json");
}
