#pragma once

#include <string>
#include <vector>

#include "hitframe/common.hpp"

namespace hitframe::rally {

enum class ShotAngleToken : int { Other = 0, High = 1 };

inline char angle_char(ShotAngleToken t) { return t == ShotAngleToken::High ? 'H' : 'O'; }

inline ShotAngleToken angle_from_char(char c) {
  switch (c) {
    case 'O': return ShotAngleToken::Other;
    case 'H': return ShotAngleToken::High;
  }
  fail(Errc::parse_failure, std::string("unknown shot-angle token '") + c + "'");
}

struct AngleStream {
  std::string video_id;
  double fps = 30.0;
  std::vector<ShotAngleToken> tokens;
};

inline std::string format_angles(const std::vector<ShotAngleToken>& tokens) {
  std::string s;
  s.reserve(tokens.size());
  for (ShotAngleToken t : tokens) s.push_back(angle_char(t));
  return s;
}

inline std::vector<ShotAngleToken> parse_angles(const std::string& s) {
  std::vector<ShotAngleToken> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(angle_from_char(c));
  return out;
}

// Inclusive frame span of one rally.
struct RallySegment {
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;

  void validate() const {
    require(start_frame <= end_frame, Errc::bad_argument, "segment start after end");
  }
  std::size_t length() const { return end_frame - start_frame + 1; }
};

// State machine over the token stream: a rally opens on Other->High and
// closes on High->Other; a run still open at end of stream is flushed.
inline std::vector<RallySegment> segment_rallies(const AngleStream& stream) {
  require(!stream.tokens.empty(), Errc::empty_input,
          "angle stream " + stream.video_id + " has no tokens");
  std::vector<RallySegment> out;
  ShotAngleToken previous = ShotAngleToken::Other;
  std::size_t open_start = 0;
  for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
    ShotAngleToken angle = stream.tokens[i];
    if (previous == ShotAngleToken::Other && angle == ShotAngleToken::High) open_start = i;
    if (previous == ShotAngleToken::High && angle == ShotAngleToken::Other)
      out.push_back({open_start, i - 1});
    previous = angle;
  }
  if (previous == ShotAngleToken::High) out.push_back({open_start, stream.tokens.size() - 1});
  return out;
}

// Debounce: runs shorter than min_run take the preceding run's token; the
// first run is never altered.
inline AngleStream smooth_stream(const AngleStream& stream, std::size_t min_run) {
  require(min_run >= 1, Errc::bad_argument, "min_run must be >= 1");
  if (min_run == 1 || stream.tokens.empty()) return stream;

  struct Run {
    ShotAngleToken token;
    std::size_t length;
  };
  std::vector<Run> runs;
  for (ShotAngleToken t : stream.tokens) {
    if (!runs.empty() && runs.back().token == t)
      ++runs.back().length;
    else
      runs.push_back({t, 1});
  }

  std::vector<Run> merged;
  for (const Run& r : runs) {
    if (merged.empty()) {
      merged.push_back(r);
    } else if (r.token == merged.back().token) {
      merged.back().length += r.length;
    } else if (r.length < min_run) {
      merged.back().length += r.length;
    } else {
      merged.push_back(r);
    }
  }

  AngleStream out{stream.video_id, stream.fps, {}};
  out.tokens.reserve(stream.tokens.size());
  for (const Run& r : merged) out.tokens.insert(out.tokens.end(), r.length, r.token);
  return out;
}

}  // namespace hitframe::rally
