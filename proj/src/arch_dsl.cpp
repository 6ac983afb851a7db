#include "uhrnet/arch_dsl.hpp"

#include <cstdio>
#include <optional>

#include "uhrnet/error.hpp"

namespace uhrnet {
namespace {

// UTF-8 encodings of the arrows used in printed tables.
constexpr std::string_view kGlyphDown = "\xE2\x86\x98";  // U+2198
constexpr std::string_view kGlyphUp = "\xE2\x86\x97";    // U+2197

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string describe(std::string_view code, std::size_t pos) {
  if (pos >= code.size()) return "end of input";
  auto byte = static_cast<unsigned char>(code[pos]);
  if (byte >= 0x20 && byte < 0x7F) return std::string("'") + code[pos] + "'";
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", byte);
  return buf;
}

[[noreturn]] void fail(ErrorCode code, std::size_t pos, const std::string& what) {
  throw Error(code, what + " at position " + std::to_string(pos), pos);
}

class Parser {
 public:
  explicit Parser(std::string_view code) : code_(code) {}

  StageSequence run() {
    if (code_.empty()) throw Error(ErrorCode::EmptyInput, "empty structure code", 0);
    StageSequence seq;
    seq.source_text = std::string(code_);
    int level = 0;

    seq.stages.push_back(count());
    while (pos_ < code_.size()) {
      if (code_[pos_] == '=') {
        if (seq.stages.size() < 2) {
          fail(ErrorCode::MisplacedTerminalMarker, pos_,
               "'=' requires at least two stages");
        }
        seq.terminal_two_branch = true;
        ++pos_;
        if (pos_ < code_.size()) {
          fail(ErrorCode::UnexpectedCharacter, pos_,
               "unexpected " + describe(code_, pos_) + " after '='");
        }
        break;
      }
      const std::size_t dir_pos = pos_;
      auto dir = direction();
      if (!dir) {
        fail(ErrorCode::UnexpectedCharacter, pos_,
             "expected 'v', '^' or '=' but found " + describe(code_, pos_));
      }
      level += (*dir == Direction::Down) ? 1 : -1;
      if (level > kMaxResolutionLevel) {
        fail(ErrorCode::ResolutionOverflow, dir_pos,
             "downsampling below the 1/64 stream");
      }
      if (level < 0) {
        fail(ErrorCode::ResolutionUnderflow, dir_pos,
             "upsampling above the 1/4 stream");
      }
      if (pos_ >= code_.size()) {
        fail(ErrorCode::DanglingDirection, dir_pos, "direction without a following stage");
      }
      seq.transitions.push_back(*dir);
      seq.stages.push_back(count());
    }
    return seq;
  }

 private:
  int count() {
    if (pos_ >= code_.size()) {
      fail(ErrorCode::UnexpectedCharacter, pos_, "expected a module count but found end of input");
    }
    if (code_[pos_] == '0') fail(ErrorCode::ZeroModuleCount, pos_, "module count must be positive");
    if (!is_digit(code_[pos_])) {
      fail(ErrorCode::UnexpectedCharacter, pos_,
           "expected a module count but found " + describe(code_, pos_));
    }
    const std::size_t start = pos_;
    int value = 0;
    while (pos_ < code_.size() && is_digit(code_[pos_])) {
      value = value * 10 + (code_[pos_] - '0');
      if (value > kMaxModuleCount) {
        fail(ErrorCode::ModuleCountTooLarge, start,
             "module count exceeds " + std::to_string(kMaxModuleCount));
      }
      ++pos_;
    }
    return value;
  }

  std::optional<Direction> direction() {
    const char c = code_[pos_];
    if (c == 'v') { ++pos_; return Direction::Down; }
    if (c == '^') { ++pos_; return Direction::Up; }
    const auto rest = code_.substr(pos_);
    if (rest.substr(0, kGlyphDown.size()) == kGlyphDown) {
      pos_ += kGlyphDown.size();
      return Direction::Down;
    }
    if (rest.substr(0, kGlyphUp.size()) == kGlyphUp) {
      pos_ += kGlyphUp.size();
      return Direction::Up;
    }
    return std::nullopt;
  }

  std::string_view code_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<int> StageSequence::resolution_indices() const {
  std::vector<int> out;
  out.reserve(stages.size());
  int level = 0;
  out.push_back(level);
  for (Direction d : transitions) {
    level += (d == Direction::Down) ? 1 : -1;
    out.push_back(level);
  }
  return out;
}

StageSequence parse_structure(std::string_view code) { return Parser(code).run(); }

std::string format_structure(const StageSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.stages.size(); ++i) {
    if (i > 0) out += (seq.transitions[i - 1] == Direction::Down) ? 'v' : '^';
    out += std::to_string(seq.stages[i]);
  }
  if (seq.terminal_two_branch) out += '=';
  return out;
}

}  // namespace uhrnet
