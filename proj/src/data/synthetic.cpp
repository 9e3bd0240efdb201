#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "itgan/data.hpp"
#include "itgan/errors.hpp"

namespace itgan {

namespace {

enum Attr { kRound, kGlasses, kBangs, kSmile, kMustache, kDarkHair, kHat, kBigEyes, kAttrCount };

struct Rgb {
  double r = 0, g = 0, b = 0;
};

double lum(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

double dist(const Rgb& a, const Rgb& b) {
  return std::sqrt((a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) + (a.b - b.b) * (a.b - b.b));
}

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Geometry shared by the renderer and the detector. Unit coordinates, y down.
constexpr double kHeadY = 0.56;
constexpr double kRoundRx = 0.31, kRoundRy = 0.33;
constexpr double kOvalRx = 0.235, kOvalRy = 0.36;
constexpr double kHairY = 0.47, kHairRy = 0.33, kHairExtra = 0.05;
constexpr double kEyeY = 0.47, kEyeDx = 0.12;
constexpr double kBigSclera = 0.075, kBigPupil = 0.028;
constexpr double kSmallSclera = 0.045, kSmallPupil = 0.022;
constexpr double kLensOuter = 0.11, kLensInner = 0.08;
constexpr double kBangsTop = 0.25, kBangsBottom = 0.345, kBangsHalf = 0.2;
constexpr double kMustacheTop = 0.69, kMustacheBottom = 0.745, kMustacheHalf = 0.11;
constexpr double kMouthY = 0.76, kSmileR = 0.12;
constexpr double kJitter = 0.015;
constexpr int kSuper = 4;
constexpr double kNoise = 0.02;

struct Nuisance {
  double dx = 0, dy = 0;
  Rgb background, skin, dark_hair, light_hair, hat, frame;
};

struct Sprite {
  std::array<int, kAttrCount> a{};
  Nuisance n;
};

std::mt19937_64 sample_rng(const SyntheticSpec& spec, Index index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  return std::mt19937_64(seq);
}

// Labels first, then every nuisance draw, so label overrides leave the rest intact.
Sprite draw_sprite(std::mt19937_64& rng, double p) {
  Sprite s;
  std::bernoulli_distribution bit(p);
  for (auto& v : s.a) v = bit(rng) ? 1 : 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  s.n.dx = range(-kJitter, kJitter);
  s.n.dy = range(-kJitter, kJitter);
  s.n.background = hsv(range(0.3, 0.75), range(0.2, 0.5), range(0.3, 0.9));
  const double t = u(rng);
  s.n.skin = {0.96 + (0.55 - 0.96) * t, 0.82 + (0.37 - 0.82) * t, 0.70 + (0.25 - 0.70) * t};
  const double l = range(0.08, 0.2);
  const Rgb dark{l * 1.2, l, l * 0.8};
  static const std::array<Rgb, 3> light = {Rgb{0.85, 0.72, 0.35}, Rgb{0.75, 0.45, 0.2}, Rgb{0.8, 0.8, 0.78}};
  const Rgb pick = light[static_cast<std::size_t>(range(0.0, 2.999))];
  const double jit = range(-0.05, 0.05);
  s.n.light_hair = {pick.r + jit, pick.g + jit, pick.b + jit};
  s.n.dark_hair = dark;
  double hue = range(-0.05, 0.15);
  if (hue < 0) hue += 1.0;
  s.n.hat = hsv(hue, range(0.7, 0.9), range(0.6, 0.9));
  s.n.frame = hsv(range(0.0, 1.0), 0.4, range(0.05, 0.15));
  return s;
}

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double a = (x - cx) / rx, b = (y - cy) / ry;
  return a * a + b * b <= 1.0;
}

bool in_circle(double x, double y, double cx, double cy, double r) {
  return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
}

// Painter's algorithm at one sample point.
Rgb shade(const Sprite& s, double x, double y) {
  const Nuisance& n = s.n;
  const double cx = 0.5 + n.dx, dy = n.dy;
  const double rx = s.a[kRound] ? kRoundRx : kOvalRx;
  const double ry = s.a[kRound] ? kRoundRy : kOvalRy;
  const double hy = kHeadY + dy;
  const Rgb hair = s.a[kDarkHair] ? n.dark_hair : n.light_hair;
  Rgb c = n.background;

  if (y < hy && in_ellipse(x, y, cx, kHairY + dy, rx + kHairExtra, kHairRy)) c = hair;
  const bool face = in_ellipse(x, y, cx, hy, rx, ry);
  if (face) c = n.skin;

  const double sclera = s.a[kBigEyes] ? kBigSclera : kSmallSclera;
  const double pupil = s.a[kBigEyes] ? kBigPupil : kSmallPupil;
  for (double side : {-1.0, 1.0}) {
    const double ex = cx + side * kEyeDx, ey = kEyeY + dy;
    if (in_circle(x, y, ex, ey, sclera)) c = {1.0, 1.0, 1.0};
    if (in_circle(x, y, ex, ey, pupil)) c = {0.12, 0.1, 0.1};
  }
  if (s.a[kGlasses]) {
    for (double side : {-1.0, 1.0}) {
      const double ex = cx + side * kEyeDx, ey = kEyeY + dy;
      if (in_circle(x, y, ex, ey, kLensOuter) && !in_circle(x, y, ex, ey, kLensInner)) c = n.frame;
    }
    if (std::abs(x - cx) <= kEyeDx - kLensInner && std::abs(y - (kEyeY + dy)) <= 0.02) c = n.frame;
  }
  if (s.a[kMustache] && std::abs(x - cx) <= kMustacheHalf && y >= kMustacheTop + dy &&
      y <= kMustacheBottom + dy) {
    c = {0.22, 0.13, 0.08};
  }
  const double my = kMouthY + dy;
  if (s.a[kSmile]) {
    if (y >= my && in_circle(x, y, cx, my, kSmileR)) c = {0.75, 0.15, 0.2};
  } else if (std::abs(x - cx) <= 0.09 && y >= my + 0.025 && y <= my + 0.055) {
    c = {0.45, 0.15, 0.15};
  }
  if (s.a[kBangs] && std::abs(x - cx) <= kBangsHalf && y >= kBangsTop + dy && y <= kBangsBottom + dy &&
      in_ellipse(x, y, cx, hy, rx + 0.02, ry + 0.02)) {
    c = hair;
  }
  if (s.a[kHat]) {
    const bool crown = std::abs(x - cx) <= 0.22 && y >= 0.05 + dy && y <= 0.2 + dy;
    const bool brim = std::abs(x - cx) <= 0.32 && y >= 0.18 + dy && y <= 0.24 + dy;
    if (crown || brim) c = n.hat;
  }
  return c;
}

LabeledImage render(const SyntheticSpec& spec, Index index, const std::vector<int>* override) {
  if (spec.image_size < 8) throw ArgumentError("synthetic image_size must be at least 8");
  auto rng = sample_rng(spec, index);
  Sprite s = draw_sprite(rng, spec.p);
  if (override) {
    if (override->size() != kAttrCount) {
      throw DimensionError("synth_render: expected " + std::to_string(kAttrCount) + " labels, got " +
                           std::to_string(override->size()));
    }
    for (std::size_t i = 0; i < kAttrCount; ++i) s.a[i] = (*override)[i] ? 1 : 0;
  }
  const int S = spec.image_size;
  LabeledImage out;
  out.pixels = TensorF({3, S, S});
  auto px = out.pixels.data();
  std::uniform_real_distribution<double> noise(-kNoise, kNoise);
  const double step = 1.0 / (S * kSuper);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      Rgb acc;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const Rgb c = shade(s, (x * kSuper + sx + 0.5) * step, (y * kSuper + sy + 0.5) * step);
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      }
      const double k = 1.0 / (kSuper * kSuper);
      const double v[3] = {acc.r * k, acc.g * k, acc.b * k};
      for (int ch = 0; ch < 3; ++ch) {
        const double val = std::clamp(v[ch] + noise(rng), 0.0, 1.0) * 2.0 - 1.0;
        px[(static_cast<std::size_t>(ch) * S + y) * S + x] =
            std::clamp(static_cast<float>(val), -1.0f + kPixelEps, 1.0f - kPixelEps);
      }
    }
  }
  out.attrs.assign(s.a.begin(), s.a.end());
  out.id = "synthetic/" + std::to_string(spec.seed) + "/" + std::to_string(index);
  return out;
}

}  // namespace

const std::vector<std::string>& synthetic_attributes() {
  static const std::vector<std::string> names = {"round_face", "glasses", "bangs", "smile",
                                                 "mustache", "dark_hair", "hat", "big_eyes"};
  return names;
}

LabeledImage synth_render(const SyntheticSpec& spec, Index index) { return render(spec, index, nullptr); }

LabeledImage synth_render(const SyntheticSpec& spec, Index index, const std::vector<int>& attrs) {
  return render(spec, index, &attrs);
}

std::vector<LabeledImage> synth_generate(const SyntheticSpec& spec, Index n) {
  if (n < 1) throw ArgumentError("synth_generate: n must be at least 1, got " + std::to_string(n));
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(synth_render(spec, i));
  return out;
}

std::shared_ptr<InMemoryDataset> synth_dataset(const SyntheticSpec& spec, Index n) {
  if (n < 1) throw ArgumentError("synth_dataset: n must be at least 1, got " + std::to_string(n));
  auto data = std::make_shared<InMemoryDataset>(synthetic_attributes(), spec.image_size);
  for (Index i = 0; i < n; ++i) data->add(synth_render(spec, i));
  return data;
}

PixelBox glasses_box(const SyntheticSpec& spec, Index index) {
  auto rng = sample_rng(spec, index);
  const Sprite s = draw_sprite(rng, spec.p);
  const double cx = 0.5 + s.n.dx, cy = kEyeY + s.n.dy;
  const double S = spec.image_size;
  PixelBox box;
  box.x0 = static_cast<int>(std::floor((cx - kEyeDx - kLensOuter) * S));
  box.x1 = static_cast<int>(std::ceil((cx + kEyeDx + kLensOuter) * S));
  box.y0 = static_cast<int>(std::floor((cy - kLensOuter) * S));
  box.y1 = static_cast<int>(std::ceil((cy + kLensOuter) * S));
  return box;
}

namespace {

struct Reader {
  const TensorF& t;
  int S;
  Rgb at(int x, int y) const {
    x = std::clamp(x, 0, S - 1);
    y = std::clamp(y, 0, S - 1);
    auto d = t.data();
    auto v = [&](int ch) { return (d[(static_cast<std::size_t>(ch) * S + y) * S + x] + 1.0) / 2.0; };
    return {v(0), v(1), v(2)};
  }
  Rgb unit(double ux, double uy) const {
    return at(static_cast<int>(std::floor(ux * S)), static_cast<int>(std::floor(uy * S)));
  }
  // Mean colour over a unit-coordinate box.
  Rgb mean(double x0, double y0, double x1, double y1) const {
    Rgb acc;
    int n = 0;
    for (int y = static_cast<int>(std::floor(y0 * S)); y <= static_cast<int>(std::floor(y1 * S)); ++y) {
      for (int x = static_cast<int>(std::floor(x0 * S)); x <= static_cast<int>(std::floor(x1 * S)); ++x) {
        const Rgb c = at(x, y);
        acc.r += c.r;
        acc.g += c.g;
        acc.b += c.b;
        ++n;
      }
    }
    return {acc.r / n, acc.g / n, acc.b / n};
  }
};

// Per-attribute evidence; an attribute is present when its score exceeds kThreshold.
std::array<double, kAttrCount> detector_scores(const TensorF& pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) != pixels.dim(2)) {
    throw DimensionError("detect_attributes: expected [3,S,S], got " + shape_str(pixels.shape()));
  }
  const int S = static_cast<int>(pixels.dim(1));
  Reader r{pixels, S};
  std::array<double, kAttrCount> score{};

  const Rgb bg = r.mean(0.0, 0.94, 0.06, 1.0);
  const Rgb skin = r.mean(0.46, 0.62, 0.54, 0.66);

  // Face width on a row below the hair line.
  const int row = static_cast<int>(std::floor(0.64 * S));
  int width = 0;
  for (int dir : {-1, 1}) {
    for (int x = S / 2 + (dir > 0 ? 0 : -1); x >= 0 && x < S; x += dir) {
      const Rgb c = r.at(x, row);
      if (dist(c, skin) < dist(c, bg)) ++width;
      else break;
    }
  }
  score[kRound] = static_cast<double>(width) / S;
  const bool round = score[kRound] > 0.535;
  const double rx = round ? kRoundRx : kOvalRx;

  const double hy = 0.42;
  const double half = rx * std::sqrt(1.0 - std::pow((hy - kHeadY) / (round ? kRoundRy : kOvalRy), 2));
  const double off = half + 0.5 * (rx + kHairExtra - half);
  const Rgb hl = r.unit(0.5 - off, hy), hr = r.unit(0.5 + off, hy);
  const Rgb hair{(hl.r + hr.r) / 2, (hl.g + hr.g) / 2, (hl.b + hr.b) / 2};
  score[kDarkHair] = 1.0 - lum(hair);

  const Rgb forehead = r.mean(0.42, 0.28, 0.58, 0.33);
  score[kBangs] = dist(forehead, skin) - dist(forehead, hair);

  double sat = 0.0;
  int sat_n = 0;
  for (int y = static_cast<int>(0.07 * S); y <= static_cast<int>(0.12 * S); ++y) {
    for (int x = static_cast<int>(0.44 * S); x <= static_cast<int>(0.56 * S); ++x) {
      const Rgb c = r.at(x, y);
      const double hi = std::max({c.r, c.g, c.b}), lo = std::min({c.r, c.g, c.b});
      sat += hi > 0 ? (hi - lo) / hi : 0.0;
      ++sat_n;
    }
  }
  score[kHat] = sat / sat_n;

  // Share of dark pixels on the nose-side half of each lens ring.
  int dark = 0, ring_n = 0;
  for (double side : {-1.0, 1.0}) {
    const double ex = 0.5 + side * kEyeDx;
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double ux = (x + 0.5) / S, uy = (y + 0.5) / S;
        const double rad = std::hypot(ux - ex, uy - kEyeY);
        if (rad < kLensInner - 0.012 || rad > kLensOuter + 0.012) continue;
        if (side * (ux - ex) > 0 || std::abs(uy - kEyeY) > 0.08) continue;
        ++ring_n;
        if (lum(r.at(x, y)) < 0.55 * lum(skin)) ++dark;
      }
    }
  }
  score[kGlasses] = static_cast<double>(dark) / ring_n;

  double white = 0.0;
  for (double side : {-1.0, 1.0}) {
    const double ex = 0.5 + side * kEyeDx;
    for (int y = static_cast<int>((kEyeY - 0.09) * S); y <= static_cast<int>((kEyeY + 0.09) * S); ++y) {
      for (int x = static_cast<int>((ex - 0.09) * S); x <= static_cast<int>((ex + 0.09) * S); ++x) {
        const Rgb c = r.at(x, y);
        white += std::clamp((std::min({c.r, c.g, c.b}) - 0.87) / 0.13, 0.0, 1.0);
      }
    }
  }
  score[kBigEyes] = white / (S * S);

  const Rgb tache = r.mean(0.43, 0.70, 0.57, 0.735);
  score[kMustache] = 1.0 - lum(tache) / std::max(lum(skin), 1e-3);

  double red = 0.0;
  for (int y = static_cast<int>(0.74 * S); y <= static_cast<int>(0.9 * S); ++y) {
    for (int x = static_cast<int>(0.36 * S); x <= static_cast<int>(0.64 * S); ++x) {
      const Rgb c = r.at(x, y);
      red += std::clamp((c.r - std::max(c.g, c.b) - 0.3) / 0.2, 0.0, 1.0);
    }
  }
  score[kSmile] = red / (S * S);
  return score;
}

constexpr std::array<double, kAttrCount> kThreshold = {0.535, 0.25, -0.032, 0.008, 0.2, 0.63, 0.6, 0.0053};

}  // namespace

std::vector<int> detect_attributes(const TensorF& pixels) {
  const auto score = detector_scores(pixels);
  std::vector<int> out(kAttrCount);
  for (int k = 0; k < kAttrCount; ++k) out[k] = score[k] > kThreshold[k] ? 1 : 0;
  return out;
}

}  // namespace itgan
