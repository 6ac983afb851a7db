#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace uhrnet {

enum class Direction : std::uint8_t { Down, Up };

// Five resolution streams: level 0 is 1/4 of the input, level 4 is 1/64.
inline constexpr int kMaxResolutionLevel = 4;
inline constexpr int kMaxModuleCount = 99;

// Parsed stage-sequence notation such as "1v1v2v2v2^1^1^1^1".
//
// Each number is the hr-module count of one stage; 'v' joins two stages with a
// downsampling step and '^' with an upsampling step. A trailing '=' keeps the
// terminal stage two-branch. The unicode arrows U+2198 and U+2197 are accepted
// in place of 'v' and '^'.
struct StageSequence {
  std::vector<int> stages;
  std::vector<Direction> transitions;
  bool terminal_two_branch = false;
  std::string source_text;

  std::size_t stage_count() const noexcept { return stages.size(); }

  // Resolution index walked along the transitions: starts at 0, +1 per Down,
  // -1 per Up. One value per stage.
  std::vector<int> resolution_indices() const;

  // Structural equality; source_text is not compared.
  friend bool operator==(const StageSequence& a, const StageSequence& b) {
    return a.stages == b.stages && a.transitions == b.transitions &&
           a.terminal_two_branch == b.terminal_two_branch;
  }
};

// Throws uhrnet::Error with a parse ErrorCode and the byte offset of the
// offending character.
StageSequence parse_structure(std::string_view code);

// Canonical ASCII form.
std::string format_structure(const StageSequence& seq);

}  // namespace uhrnet
