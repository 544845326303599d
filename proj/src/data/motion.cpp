#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lgtok/corpus.hpp"
#include "lgtok/error.hpp"

namespace lgtok::corpus {

namespace {

struct ClassShape {
  double limb_freq_hz;
  double limb_amp;
  double yaw_rate;    // rad/s
  double hop_height;  // 0 for non-jumping classes
  double hop_freq_hz;
};

ClassShape shape_of(ActionClass a) {
  switch (a) {
    case ActionClass::kWalk: return {1.0, 0.5, 0.0, 0.0, 0.0};
    case ActionClass::kRun: return {1.6, 1.0, 0.0, 0.0, 0.0};
    case ActionClass::kJump: return {0.8, 0.25, 0.0, 0.5, 1.2};
    case ActionClass::kTurnLeft: return {1.0, 0.5, 1.0, 0.0, 0.0};
    case ActionClass::kTurnRight: return {1.0, 0.5, -1.0, 0.0, 0.0};
  }
  fail(ErrorKind::kBounds, "unknown action class");
}

constexpr const char* kVerbs[] = {"walks", "runs", "jumps", "turns left", "turns right"};
constexpr const char* kSpeeds[] = {"slowly", "quickly"};
constexpr const char* kDirections[] = {"forward", "leftward", "backward", "rightward"};

std::string normalize_words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string word, out;
  while (in >> word) {
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

}  // namespace

int SemanticLabel::index() const {
  return (static_cast<int>(action) * kSpeedBucketCount + static_cast<int>(speed)) * kDirectionBucketCount +
         static_cast<int>(direction);
}

SpeedBucket speed_bucket(float speed) {
  return speed < 0.5f * (kSlowSpeedMax + kFastSpeedMin) ? SpeedBucket::kSlow : SpeedBucket::kFast;
}

DirectionBucket direction_bucket(float radians) {
  constexpr double pi = std::numbers::pi;
  double a = std::remainder(static_cast<double>(radians), 2.0 * pi);  // (-pi, pi]
  if (std::fabs(a) < pi / 4) return DirectionBucket::kForward;
  if (a >= pi / 4 && a < 3 * pi / 4) return DirectionBucket::kLeftward;
  if (a <= -pi / 4 && a > -3 * pi / 4) return DirectionBucket::kRightward;
  return DirectionBucket::kBackward;
}

MotionSequence generate_motion(ActionClass action, float speed, float direction, float amplitude,
                               std::size_t frames, std::uint64_t seed) {
  MotionParams p;
  p.action = action;
  p.speed = speed;
  p.direction = direction;
  p.amplitude = amplitude;
  p.frames = frames;
  p.seed = seed;
  return generate_motion(p);
}

MotionSequence generate_motion(const MotionParams& p) {
  require(p.frames >= kMinFrames && p.frames <= kMaxFrames, ErrorKind::kBounds,
          "frames " + std::to_string(p.frames) + " outside [" + std::to_string(kMinFrames) + ", " +
              std::to_string(kMaxFrames) + "]");
  require(std::isfinite(p.speed) && p.speed >= 0.0f, ErrorKind::kBounds, "speed must be finite and >= 0");
  require(std::isfinite(p.amplitude) && p.amplitude >= 0.0f, ErrorKind::kBounds,
          "amplitude must be finite and >= 0");
  require(std::isfinite(p.direction), ErrorKind::kBounds, "direction must be finite");

  const ClassShape shape = shape_of(p.action);
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double limb_phase = phase_dist(rng);
  const double hop_phase = phase_dist(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double noise_std = 0.005 * p.amplitude;

  const double dt = 1.0 / kFps;
  const double omega = 2.0 * std::numbers::pi * shape.limb_freq_hz;
  const double amp = shape.limb_amp * p.amplitude;

  MotionSequence m;
  m.data = nn::Tensor::matrix(p.frames, kChannels);
  double x = 0.0, z = 0.0;
  for (std::size_t f = 0; f < p.frames; ++f) {
    const double t = static_cast<double>(f) * dt;
    const double yaw = p.direction + shape.yaw_rate * t;
    double vertical;
    if (shape.hop_height > 0.0) {
      vertical = shape.hop_height * p.amplitude *
                 std::fabs(std::sin(std::numbers::pi * shape.hop_freq_hz * t + hop_phase));
    } else {
      vertical = 0.02 * p.amplitude * std::sin(2.0 * omega * t + limb_phase);
    }
    const double values[kChannels] = {
        x, z, yaw, amp * std::sin(omega * t + limb_phase), amp * std::cos(omega * t + limb_phase),
        vertical, static_cast<double>(p.speed), shape.yaw_rate};
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double n = noise_std > 0.0 ? noise_std * noise(rng) : 0.0;
      m.data.at(f, c) = static_cast<float>(values[c] + n);
    }
    x += p.speed * dt * std::cos(yaw);
    z += p.speed * dt * std::sin(yaw);
  }
  m.caption = make_caption(label_for(p));
  m.params = p;
  return m;
}

SemanticLabel label_for(const MotionParams& p) {
  return {p.action, speed_bucket(p.speed), direction_bucket(p.direction)};
}

std::string make_caption(const SemanticLabel& label) {
  return std::string("a person ") + kVerbs[static_cast<int>(label.action)] + " " +
         kSpeeds[static_cast<int>(label.speed)] + " " + kDirections[static_cast<int>(label.direction)];
}

std::optional<SemanticLabel> parse_caption(std::string_view caption) {
  const std::string norm = normalize_words(caption);
  for (int a = 0; a < kActionClassCount; ++a) {
    for (int s = 0; s < kSpeedBucketCount; ++s) {
      for (int d = 0; d < kDirectionBucketCount; ++d) {
        SemanticLabel l{static_cast<ActionClass>(a), static_cast<SpeedBucket>(s),
                        static_cast<DirectionBucket>(d)};
        if (make_caption(l) == norm) return l;
      }
    }
  }
  return std::nullopt;
}

}  // namespace lgtok::corpus
