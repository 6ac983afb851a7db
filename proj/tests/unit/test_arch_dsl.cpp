#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "uhrnet/arch_dsl.hpp"
#include "uhrnet/error.hpp"

using namespace uhrnet;
using D = Direction;

namespace {

ErrorCode parse_error(const std::string& code, std::size_t* where = nullptr) {
  try {
    parse_structure(code);
  } catch (const Error& e) {
    if (where && e.location()) *where = *e.location();
    return e.code();
  }
  FAIL("no error for " << code);
  return ErrorCode::EmptyInput;
}

// Structure cells of the ablation table, transcribed with v for the down arrow
// and ^ for the up arrow.
const std::vector<std::string> kTableRows = {
    "1v1v3v2=",          "1v1v3v5=",          "1v1v3v7=",
    "1v1v2v5^1=",        "1v1v2v5^1^1^1",     "1v1v4v1v1^1^1^1^1",
    "1v1v2v1v1^1^2^2^1", "1v1v2v2v2^1^1^1^1", "1v1v2v2v2^1^1^1^1",
};

}  // namespace

TEST_CASE("small network sequence") {
  const auto s = parse_structure("1v1v2v2v2^1^1^1^1");
  CHECK(s.stages == std::vector<int>{1, 1, 2, 2, 2, 1, 1, 1, 1});
  CHECK(s.transitions == std::vector<D>{D::Down, D::Down, D::Down, D::Down, D::Up, D::Up, D::Up, D::Up});
  CHECK_FALSE(s.terminal_two_branch);
  CHECK(s.source_text == "1v1v2v2v2^1^1^1^1");
  CHECK(s.resolution_indices() == std::vector<int>{0, 1, 2, 3, 4, 3, 2, 1, 0});
}

TEST_CASE("terminal two-branch marker") {
  const auto s = parse_structure("1v1v3v2=");
  CHECK(s.stages == std::vector<int>{1, 1, 3, 2});
  CHECK(s.transitions == std::vector<D>{D::Down, D::Down, D::Down});
  CHECK(s.terminal_two_branch);
}

TEST_CASE("minimal sequence") {
  const auto s = parse_structure("1");
  CHECK(s.stages == std::vector<int>{1});
  CHECK(s.transitions.empty());
  CHECK_FALSE(s.terminal_two_branch);
}

TEST_CASE("error kinds") {
  CHECK(parse_error("1v1v1v1v1v1") == ErrorCode::ResolutionOverflow);
  CHECK(parse_error("1^1") == ErrorCode::ResolutionUnderflow);
  CHECK(parse_error("") == ErrorCode::EmptyInput);
  CHECK(parse_error("1v") == ErrorCode::DanglingDirection);
  CHECK(parse_error("1v0") == ErrorCode::ZeroModuleCount);
  CHECK(parse_error("1=") == ErrorCode::MisplacedTerminalMarker);
  CHECK(parse_error("1v1=v1") == ErrorCode::UnexpectedCharacter);
  CHECK(parse_error("1v100") == ErrorCode::ModuleCountTooLarge);
  std::size_t at = 99;
  CHECK(parse_error("1v^", &at) == ErrorCode::UnexpectedCharacter);
  CHECK(at == 2);
  CHECK(parse_error("1vx", &at) == ErrorCode::UnexpectedCharacter);
  CHECK(at == 2);
}

TEST_CASE("unicode arrows") {
  CHECK(parse_structure("1↘1↘2↗5=") == parse_structure("1v1v2^5="));
  CHECK(format_structure(parse_structure("1↘1↘2")) == "1v1v2");
}

TEST_CASE("format") {
  StageSequence s;
  s.stages = {1, 1, 2, 5, 1};
  s.transitions = {D::Down, D::Down, D::Down, D::Up};
  s.terminal_two_branch = true;
  CHECK(format_structure(s) == "1v1v2v5^1=");
  StageSequence one;
  one.stages = {1};
  CHECK(format_structure(one) == "1");
}

TEST_CASE("table rows round-trip") {
  for (const auto& row : kTableRows) {
    CAPTURE(row);
    const auto s = parse_structure(row);
    CHECK(format_structure(s) == row);
    CHECK(parse_structure(format_structure(s)) == s);
  }
}

TEST_CASE("random valid sequences round-trip") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 2000; ++iter) {
    StageSequence s;
    int level = 0;
    const int len = 1 + static_cast<int>(rng() % 12);
    s.stages.push_back(1 + static_cast<int>(rng() % 99));
    for (int i = 1; i < len; ++i) {
      bool down = rng() % 2;
      if (level == 0) down = true;
      if (level == kMaxResolutionLevel) down = false;
      level += down ? 1 : -1;
      s.transitions.push_back(down ? D::Down : D::Up);
      s.stages.push_back(1 + static_cast<int>(rng() % 99));
    }
    s.terminal_two_branch = len >= 2 && rng() % 2;
    CHECK(parse_structure(format_structure(s)) == s);
  }
}

TEST_CASE("fuzz never crashes") {
  std::mt19937_64 rng(2024);
  const std::string alphabet = "0123456789v^=x \t-";
  int parsed = 0;
  for (int iter = 0; iter < 10000; ++iter) {
    std::string text;
    const std::size_t len = iter % 2 ? rng() % 1025 : rng() % 14;
    const bool bytes = iter % 4 == 0;
    for (std::size_t i = 0; i < len; ++i) {
      if (bytes) {
        text.push_back(static_cast<char>(rng() & 0xff));
      } else if (rng() % 20 == 0) {
        text += (rng() % 2) ? "↘" : "↗";
      } else {
        text.push_back(alphabet[rng() % alphabet.size()]);
      }
      if (text.size() >= 1024) break;
    }
    try {
      const auto s = parse_structure(text);
      ++parsed;
      CHECK(parse_structure(format_structure(s)) == s);
    } catch (const Error&) {
    }
  }
  MESSAGE(parsed << " of 10000 fuzz strings parsed");
}
