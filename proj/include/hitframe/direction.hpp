#pragma once

#include <string>
#include <vector>

#include "hitframe/common.hpp"

namespace hitframe::dir {

// Per-frame shuttlecock direction: served/idle, toward bottom player, toward
// upper player, or padding past the rally end.
enum class DirectionToken : int { S = 0, B = 1, U = 2, Pad = 3 };

inline char token_char(DirectionToken t) {
  switch (t) {
    case DirectionToken::S: return 'S';
    case DirectionToken::B: return 'B';
    case DirectionToken::U: return 'U';
    case DirectionToken::Pad: return 'P';
  }
  return '?';
}

inline DirectionToken token_from_char(char c) {
  switch (c) {
    case 'S': return DirectionToken::S;
    case 'B': return DirectionToken::B;
    case 'U': return DirectionToken::U;
    case 'P': return DirectionToken::Pad;
  }
  fail(Errc::parse_failure, std::string("unknown direction token '") + c + "'");
}

struct DirectionSequence {
  std::string rally_id;
  std::vector<DirectionToken> tokens;

  // Pad may only appear as a contiguous suffix.
  void validate() const {
    bool padding = false;
    for (DirectionToken t : tokens) {
      if (t == DirectionToken::Pad) {
        padding = true;
      } else {
        require(!padding, Errc::bad_argument,
                "direction sequence " + rally_id + " has a non-suffix Pad");
      }
    }
  }

  std::size_t content_length() const {
    std::size_t n = 0;
    while (n < tokens.size() && tokens[n] != DirectionToken::Pad) ++n;
    return n;
  }
};

inline std::string format_directions(const std::vector<DirectionToken>& tokens) {
  std::string s;
  s.reserve(tokens.size());
  for (DirectionToken t : tokens) s.push_back(token_char(t));
  return s;
}

inline std::vector<DirectionToken> parse_directions(const std::string& s) {
  std::vector<DirectionToken> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(token_from_char(c));
  return out;
}

}  // namespace hitframe::dir
