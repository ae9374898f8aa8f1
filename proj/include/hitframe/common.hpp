#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hitframe {

inline constexpr int kSchemaVersion = 1;

enum class Errc {
  invalid_court,
  insufficient_players,
  shape_mismatch,
  label_out_of_range,
  empty_mask,
  missing_running_stats,
  empty_input,
  bad_config,
  length_exceeded,
  bad_argument,
  out_of_range,
  empty_evaluation,
  degenerate_data,
  missing_input,
  io_failure,
  parse_failure,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_court: return "invalid_court";
    case Errc::insufficient_players: return "insufficient_players";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::label_out_of_range: return "label_out_of_range";
    case Errc::empty_mask: return "empty_mask";
    case Errc::missing_running_stats: return "missing_running_stats";
    case Errc::empty_input: return "empty_input";
    case Errc::bad_config: return "bad_config";
    case Errc::length_exceeded: return "length_exceeded";
    case Errc::bad_argument: return "bad_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::empty_evaluation: return "empty_evaluation";
    case Errc::degenerate_data: return "degenerate_data";
    case Errc::missing_input: return "missing_input";
    case Errc::io_failure: return "io_failure";
    case Errc::parse_failure: return "parse_failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 streams keyed by explicit integers so that
// outputs never depend on call order across unrelated consumers.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_key(mix_key(a, b), c);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix_key(mix_key(a, b, c), d);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::int64_t range(std::int64_t lo, std::int64_t hi) {  // inclusive bounds
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hitframe
