#pragma once

#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/rally.hpp"

namespace hitframe::hits {

struct HitFrameSet {
  std::string rally_id;
  std::vector<std::size_t> indices;  // rally-local, strictly increasing
};

// Transition scan with previous direction initialized to S: a hit fires on
// every direction change whose new direction is not S (S->B, S->U, B->U,
// U->B); changes into S are the shuttle landing. The hit index is the first
// frame of the new run.
inline HitFrameSet detect_hits(const dir::DirectionSequence& s) {
  using dir::DirectionToken;
  HitFrameSet out{s.rally_id, {}};
  DirectionToken previous = DirectionToken::S;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    DirectionToken direction = s.tokens[i];
    require(direction != DirectionToken::Pad, Errc::bad_argument,
            "direction sequence " + s.rally_id + " contains Pad at frame " + std::to_string(i));
    if (direction != previous) {
      if (direction != DirectionToken::S) out.indices.push_back(i);
      previous = direction;
    }
  }
  return out;
}

inline std::vector<std::size_t> to_global(const HitFrameSet& hits,
                                          const rally::RallySegment& segment) {
  segment.validate();
  std::vector<std::size_t> out;
  out.reserve(hits.indices.size());
  for (std::size_t i : hits.indices) {
    require(i <= segment.end_frame - segment.start_frame, Errc::out_of_range,
            "hit index " + std::to_string(i) + " beyond segment length " +
                std::to_string(segment.length()));
    out.push_back(segment.start_frame + i);
  }
  return out;
}

}  // namespace hitframe::hits
