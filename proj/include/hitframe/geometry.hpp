#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hitframe/common.hpp"

namespace hitframe::geom {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Six labeled court keypoints; containment uses only the four corners.
struct CourtKeypoints {
  Point2 upper_left, upper_right, middle_left, middle_right, bottom_left, bottom_right;

  std::array<Point2, 4> corners() const {
    return {upper_left, upper_right, bottom_right, bottom_left};
  }

  double extent() const {
    double lo_x = upper_left.x, hi_x = upper_left.x, lo_y = upper_left.y, hi_y = upper_left.y;
    for (const Point2& p : corners()) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
    return std::max(hi_x - lo_x, hi_y - lo_y);
  }

  void validate() const {
    require(upper_left.y < bottom_left.y && upper_right.y < bottom_right.y, Errc::invalid_court,
            "upper court points must sit above bottom points");
    auto c = corners();
    double area2 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const Point2& a = c[i];
      const Point2& b = c[(i + 1) % 4];
      area2 += a.x * b.y - b.x * a.y;
    }
    double ext = extent();
    require(std::abs(area2) > 1e-12 * std::max(1.0, ext * ext), Errc::invalid_court,
            "court quadrilateral has zero area");
    auto proper_cross = [&](const Point2& a, const Point2& b, const Point2& p, const Point2& q) {
      double d1 = cross(a, b, p), d2 = cross(a, b, q);
      double d3 = cross(p, q, a), d4 = cross(p, q, b);
      return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
    };
    require(!proper_cross(c[0], c[1], c[2], c[3]) && !proper_cross(c[1], c[2], c[3], c[0]),
            Errc::invalid_court, "court quadrilateral self-intersects");
  }
};

// Inside-or-on-boundary test against the corner quadrilateral. Tolerances are
// relative to the court extent so the test is scale invariant.
inline bool point_in_court(const Point2& p, const CourtKeypoints& court) {
  court.validate();
  auto c = court.corners();
  double eps = 1e-9 * std::max(1.0, court.extent());

  for (std::size_t i = 0; i < 4; ++i) {
    const Point2& a = c[i];
    const Point2& b = c[(i + 1) % 4];
    double area = cross(a, b, p);
    double seg_len = std::hypot(b.x - a.x, b.y - a.y);
    if (std::abs(area) <= eps * std::max(1.0, seg_len)) {
      if (p.x >= std::min(a.x, b.x) - eps && p.x <= std::max(a.x, b.x) + eps &&
          p.y >= std::min(a.y, b.y) - eps && p.y <= std::max(a.y, b.y) + eps)
        return true;
    }
  }

  // crossing-number ray cast toward +x
  bool inside = false;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point2& a = c[i];
    const Point2& b = c[(i + 1) % 4];
    if ((a.y > p.y) != (b.y > p.y)) {
      double x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (x_at > p.x) inside = !inside;
    }
  }
  return inside;
}

// COCO-style 17-keypoint skeleton; ankles are the filter's anchor joints.
struct SkeletonKeypoints {
  static constexpr std::size_t kCount = 17;
  static constexpr std::size_t kLeftAnkle = 15;
  static constexpr std::size_t kRightAnkle = 16;

  std::array<Point2, kCount> pts{};

  Point2 ankle_mid() const {
    return {(pts[kLeftAnkle].x + pts[kRightAnkle].x) / 2.0,
            (pts[kLeftAnkle].y + pts[kRightAnkle].y) / 2.0};
  }

  double bbox_area() const {
    double lo_x = pts[0].x, hi_x = pts[0].x, lo_y = pts[0].y, hi_y = pts[0].y;
    for (const Point2& p : pts) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
    return (hi_x - lo_x) * (hi_y - lo_y);
  }
};

struct PlayerKeypointPair {
  SkeletonKeypoints bottom_player;
  SkeletonKeypoints top_player;
};

inline PlayerKeypointPair order_players(const SkeletonKeypoints& a, const SkeletonKeypoints& b) {
  Point2 ma = a.ankle_mid();
  Point2 mb = b.ankle_mid();
  bool a_bottom = ma.y > mb.y || (ma.y == mb.y && ma.x <= mb.x);
  return a_bottom ? PlayerKeypointPair{a, b} : PlayerKeypointPair{b, a};
}

inline PlayerKeypointPair filter_players(const std::vector<SkeletonKeypoints>& instances,
                                         const CourtKeypoints& court) {
  require(!instances.empty(), Errc::insufficient_players, "no keypoint instances");
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const SkeletonKeypoints& s = instances[i];
    if (point_in_court(s.pts[SkeletonKeypoints::kLeftAnkle], court) ||
        point_in_court(s.pts[SkeletonKeypoints::kRightAnkle], court))
      survivors.push_back(i);
  }
  require(survivors.size() >= 2, Errc::insufficient_players,
          "only " + std::to_string(survivors.size()) + " instances with an ankle in court");
  if (survivors.size() > 2) {
    std::stable_sort(survivors.begin(), survivors.end(), [&](std::size_t l, std::size_t r) {
      return instances[l].bbox_area() > instances[r].bbox_area();
    });
    survivors.resize(2);
  }
  return order_players(instances[survivors[0]], instances[survivors[1]]);
}

// Per-coordinate statistics over the training split, shared by both player
// slots (34 = 17 joints x 2 coordinates).
struct KeypointStats {
  std::array<double, 34> mean{};
  std::array<double, 34> stddev{};

  void validate() const {
    for (double s : stddev) require(s > 0.0, Errc::bad_config, "keypoint std must be positive");
  }
};

inline SkeletonKeypoints normalize_skeleton(const SkeletonKeypoints& s, const KeypointStats& st) {
  SkeletonKeypoints out;
  for (std::size_t i = 0; i < SkeletonKeypoints::kCount; ++i) {
    out.pts[i].x = (s.pts[i].x - st.mean[2 * i]) / st.stddev[2 * i];
    out.pts[i].y = (s.pts[i].y - st.mean[2 * i + 1]) / st.stddev[2 * i + 1];
  }
  return out;
}

inline SkeletonKeypoints denormalize_skeleton(const SkeletonKeypoints& s, const KeypointStats& st) {
  SkeletonKeypoints out;
  for (std::size_t i = 0; i < SkeletonKeypoints::kCount; ++i) {
    out.pts[i].x = s.pts[i].x * st.stddev[2 * i] + st.mean[2 * i];
    out.pts[i].y = s.pts[i].y * st.stddev[2 * i + 1] + st.mean[2 * i + 1];
  }
  return out;
}

inline PlayerKeypointPair normalize_pair(const PlayerKeypointPair& pair, const KeypointStats& st) {
  st.validate();
  return {normalize_skeleton(pair.bottom_player, st), normalize_skeleton(pair.top_player, st)};
}

inline PlayerKeypointPair denormalize_pair(const PlayerKeypointPair& pair,
                                           const KeypointStats& st) {
  st.validate();
  return {denormalize_skeleton(pair.bottom_player, st), denormalize_skeleton(pair.top_player, st)};
}

}  // namespace hitframe::geom
