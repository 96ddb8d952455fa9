#include "rcav/textures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rcav/errors.hpp"

namespace rcav {

std::string_view texture_name(TextureKind kind) {
  switch (kind) {
    case TextureKind::stripe: return "stripe";
    case TextureKind::dot: return "dot";
    case TextureKind::zigzag: return "zigzag";
    case TextureKind::spiral: return "spiral";
  }
  return "?";
}

TextureKind parse_texture(std::string_view name) {
  if (name == "stripe") return TextureKind::stripe;
  if (name == "dot") return TextureKind::dot;
  if (name == "zigzag") return TextureKind::zigzag;
  if (name == "spiral") return TextureKind::spiral;
  throw ConfigError("unknown texture: " + std::string(name));
}

TextureField default_texture(TextureKind kind, double phase) {
  TextureField f;
  f.kind = kind;
  f.phase = phase;
  f.amplitude = 1.0;
  switch (kind) {
    case TextureKind::stripe: f.period = 4.0; break;
    case TextureKind::dot: f.period = 5.0; break;
    case TextureKind::zigzag: f.period = 6.0; break;
    case TextureKind::spiral: f.period = 5.0; break;
  }
  return f;
}

double TextureField::value(double row, double col, std::size_t height, std::size_t width) const {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double carrier = 0.0;
  switch (kind) {
    case TextureKind::stripe:
      carrier = std::sin(two_pi * col / period + phase);
      break;
    case TextureKind::dot: {
      const double shift = phase / two_pi * period;
      auto centred = [&](double v) {
        const double f = (v + shift) / period;
        return (f - std::floor(f) - 0.5) * period;
      };
      const double dy = centred(row), dx = centred(col);
      const double sigma = period / 5.0;
      carrier = 2.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) - 1.0;
      break;
    }
    case TextureKind::zigzag: {
      // Triangle-wave displacement of horizontal bands.
      const double f = col / period;
      const double tri = period * 2.0 * std::abs(f - std::floor(f) - 0.5);
      carrier = std::sin(two_pi * (row + tri) / period + phase);
      break;
    }
    case TextureKind::spiral: {
      const double cy = (static_cast<double>(height) - 1.0) / 2.0;
      const double cx = (static_cast<double>(width) - 1.0) / 2.0;
      const double r = std::hypot(row - cy, col - cx);
      const double theta = std::atan2(row - cy, col - cx);
      carrier = std::sin(two_pi * r / period - theta + phase);
      break;
    }
  }
  return std::clamp(0.5 + 0.5 * amplitude * carrier, 0.0, 1.0);
}

}  // namespace rcav
