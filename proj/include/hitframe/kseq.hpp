#pragma once

#include <string>
#include <vector>

#include "hitframe/common.hpp"
#include "hitframe/direction.hpp"
#include "hitframe/geometry.hpp"

namespace hitframe::dir {

// One rally's worth of filtered player keypoints, one pair per frame.
// `labels` is empty for inference-time records and frame-aligned for
// training data; gold labels never contain Pad. `video_id`/`start_frame`
// carry the source segment so detected hits can be mapped back to global
// frame indices.
struct KSeqRecord {
  std::string rally_id;
  std::string video_id;
  long long start_frame = 0;
  std::vector<geom::PlayerKeypointPair> pairs;
  std::vector<DirectionToken> labels;

  bool labeled() const { return !labels.empty(); }

  void validate() const {
    require(!rally_id.empty(), Errc::bad_argument, "rally_id must be non-empty");
    require(!pairs.empty(), Errc::empty_input, "keypoint sequence has no frames");
    if (!labels.empty()) {
      require(labels.size() == pairs.size(), Errc::shape_mismatch,
              "label count does not match frame count in rally " + rally_id);
      for (DirectionToken t : labels) {
        require(t != DirectionToken::Pad, Errc::label_out_of_range,
                "gold labels must not contain padding in rally " + rally_id);
      }
    }
  }
};

}  // namespace hitframe::dir
