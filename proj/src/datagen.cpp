#include "sake/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <unordered_map>

#include "sake/binary_io.hpp"
#include "sake/errors.hpp"

namespace sake {

namespace {

constexpr std::string_view kSplitMagic = "SAKEDAT1";
constexpr int kManifestVersion = 1;
constexpr double kPi = std::numbers::pi;

struct V2 {
  double x, y;
};

V2 operator-(V2 a, V2 b) { return {a.x - b.x, a.y - b.y}; }
double dot(V2 a, V2 b) { return a.x * b.x + a.y * b.y; }
double len(V2 a) { return std::sqrt(dot(a, a)); }
V2 rotate(V2 p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

// Signed distances in shape units: negative inside. Image y grows downwards.
using Sdf = std::function<double(V2)>;

double sd_circle(V2 p, double r) { return len(p) - r; }

double sd_ellipse(V2 p, double a, double b) {
  const double k = len({p.x / a, p.y / b});
  return (k - 1.0) * std::min(a, b);
}

double sd_box(V2 p, V2 half) {
  const V2 d{std::abs(p.x) - half.x, std::abs(p.y) - half.y};
  const V2 outside{std::max(d.x, 0.0), std::max(d.y, 0.0)};
  return len(outside) + std::min(std::max(d.x, d.y), 0.0);
}

double sd_segment(V2 p, V2 a, V2 b) {
  const V2 pa = p - a, ba = b - a;
  const double h = std::clamp(dot(pa, ba) / dot(ba, ba), 0.0, 1.0);
  return len({pa.x - ba.x * h, pa.y - ba.y * h});
}

double sd_polygon(V2 p, const std::vector<V2>& v) {
  double d = dot(p - v[0], p - v[0]);
  double sign = 1.0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i, ++i) {
    const V2 e = v[j] - v[i], w = p - v[i];
    const double h = std::clamp(dot(w, e) / dot(e, e), 0.0, 1.0);
    const V2 b{w.x - e.x * h, w.y - e.y * h};
    d = std::min(d, dot(b, b));
    const bool c1 = p.y >= v[i].y, c2 = p.y < v[j].y, c3 = e.x * w.y > e.y * w.x;
    if ((c1 && c2 && c3) || (!c1 && !c2 && !c3)) sign = -sign;
  }
  return sign * std::sqrt(d);
}

double sd_polyline(V2 p, const std::vector<V2>& pts, double half_width) {
  double d = 1e9;
  for (std::size_t i = 1; i < pts.size(); ++i) d = std::min(d, sd_segment(p, pts[i - 1], pts[i]));
  return d - half_width;
}

std::vector<V2> regular_polygon(int sides, double radius, double phase) {
  std::vector<V2> v;
  for (int i = 0; i < sides; ++i) {
    const double a = phase + 2.0 * kPi * i / sides;
    v.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return v;
}

std::vector<V2> star_polygon(int points, double outer, double inner) {
  std::vector<V2> v;
  for (int i = 0; i < 2 * points; ++i) {
    const double a = -kPi / 2 + kPi * i / points;
    const double r = (i % 2 == 0) ? outer : inner;
    v.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return v;
}

double ring(V2 p, double r, double half_width) { return std::abs(sd_circle(p, r)) - half_width; }

constexpr double kUp = -kPi / 2;  // vertex pointing to the top of the image

// j1, j2 in [-1, 1] perturb the recipe per sample.
using Recipe = std::function<Sdf(double j1, double j2)>;

const std::unordered_map<std::string, Recipe>& recipes() {
  static const std::unordered_map<std::string, Recipe> table = [] {
    std::unordered_map<std::string, Recipe> t;
    // ellipse family
    t["disc"] = [](double j1, double) { return Sdf([=](V2 p) { return sd_circle(p, 0.88 + 0.05 * j1); }); };
    t["oval_wide"] = [](double j1, double) {
      return Sdf([=](V2 p) { return sd_ellipse(p, 1.0, 0.55 + 0.05 * j1); });
    };
    t["oval_tall"] = [](double j1, double) {
      return Sdf([=](V2 p) { return sd_ellipse(p, 0.55 + 0.05 * j1, 1.0); });
    };
    t["oval_diagonal"] = [](double j1, double) {
      return Sdf([=](V2 p) { return sd_ellipse(rotate(p, kPi / 4), 1.0, 0.5 + 0.05 * j1); });
    };
    t["half_disc"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const V2 q{p.x, p.y - 0.35};
        return std::max(sd_circle(q, 0.95 + 0.04 * j1), q.y);
      });
    };
    // ring family
    t["ring_thin"] = [](double j1, double) { return Sdf([=](V2 p) { return ring(p, 0.82 + 0.05 * j1, 0.07); }); };
    t["ring_thick"] = [](double j1, double) { return Sdf([=](V2 p) { return ring(p, 0.66, 0.24 + 0.03 * j1); }); };
    t["ring_oval"] = [](double j1, double) {
      return Sdf([=](V2 p) { return std::abs(sd_ellipse(p, 1.0, 0.6 + 0.05 * j1)) - 0.09; });
    };
    t["ring_double"] = [](double j1, double) {
      return Sdf([=](V2 p) { return std::min(ring(p, 0.88, 0.07), ring(p, 0.45 + 0.04 * j1, 0.07)); });
    };
    t["ring_broken"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        return std::max(ring(p, 0.8, 0.1), -sd_box(p - V2{0.8, 0.0}, {0.4, 0.3 + 0.05 * j1}));
      });
    };
    // ring composites
    t["ring_dot"] = [](double j1, double) {
      return Sdf([=](V2 p) { return std::min(ring(p, 0.86, 0.08), sd_circle(p, 0.28 + 0.04 * j1)); });
    };
    t["ring_bar"] = [](double j1, double) {
      return Sdf([=](V2 p) { return std::min(ring(p, 0.86, 0.08), sd_box(p, {0.6, 0.12 + 0.02 * j1})); });
    };
    t["ring_cross"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double w = 0.1 + 0.02 * j1;
        return std::min({ring(p, 0.86, 0.08), sd_box(p, {0.6, w}), sd_box(p, {w, 0.6})});
      });
    };
    t["ring_pair"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double r = 0.42 + 0.03 * j1;
        return std::min(ring(p - V2{-0.5, 0}, r, 0.08), ring(p - V2{0.5, 0}, r, 0.08));
      });
    };
    t["ring_square"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double h = 0.36 + 0.03 * j1;
        return std::min(ring(p, 0.9, 0.08), sd_box(p, {h, h}));
      });
    };
    // low polygons
    t["triangle"] = [](double j1, double) {
      return Sdf([v = regular_polygon(3, 1.0 + 0.05 * j1, kUp)](V2 p) { return sd_polygon(p - V2{0, -0.15}, v); });
    };
    t["triangle_inverted"] = [](double j1, double) {
      return Sdf([v = regular_polygon(3, 1.0 + 0.05 * j1, -kUp)](V2 p) { return sd_polygon(p - V2{0, 0.15}, v); });
    };
    t["square"] = [](double j1, double) {
      return Sdf([v = regular_polygon(4, 0.95 + 0.05 * j1, kPi / 4)](V2 p) { return sd_polygon(p, v); });
    };
    t["diamond"] = [](double j1, double) {
      return Sdf([v = regular_polygon(4, 1.0 + 0.05 * j1, kUp)](V2 p) { return sd_polygon(p, v); });
    };
    t["pentagon"] = [](double j1, double) {
      return Sdf([v = regular_polygon(5, 0.95 + 0.05 * j1, kUp)](V2 p) { return sd_polygon(p, v); });
    };
    // high polygons
    t["hexagon"] = [](double j1, double) {
      return Sdf([v = regular_polygon(6, 0.95 + 0.05 * j1, kUp)](V2 p) { return sd_polygon(p, v); });
    };
    t["heptagon"] = [](double j1, double) {
      return Sdf([v = regular_polygon(7, 0.95 + 0.05 * j1, kUp)](V2 p) { return sd_polygon(p, v); });
    };
    t["octagon"] = [](double j1, double) {
      return Sdf([v = regular_polygon(8, 0.95 + 0.05 * j1, kPi / 8)](V2 p) { return sd_polygon(p, v); });
    };
    t["trapezoid"] = [](double j1, double) {
      const double top = 0.45 + 0.06 * j1;
      return Sdf([v = std::vector<V2>{{-1.0, 0.55}, {-top, -0.55}, {top, -0.55}, {1.0, 0.55}}](V2 p) {
        return sd_polygon(p, v);
      });
    };
    t["parallelogram"] = [](double j1, double) {
      const double s = 0.45 + 0.06 * j1;
      return Sdf([v = std::vector<V2>{{-1.0, 0.5}, {-1.0 + 2 * s, -0.5}, {1.0, -0.5}, {1.0 - 2 * s, 0.5}}](V2 p) {
        return sd_polygon(p, v);
      });
    };
    // stars
    for (int n = 4; n <= 8; ++n) {
      t["star" + std::to_string(n)] = [n](double j1, double) {
        return Sdf([v = star_polygon(n, 1.0, 0.45 + 0.04 * j1)](V2 p) { return sd_polygon(p, v); });
      };
    }
    // crosses
    t["plus"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double w = 0.22 + 0.03 * j1;
        return std::min(sd_box(p, {1.0, w}), sd_box(p, {w, 1.0}));
      });
    };
    t["saltire"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const V2 q = rotate(p, kPi / 4);
        const double w = 0.22 + 0.03 * j1;
        return std::min(sd_box(q, {1.0, w}), sd_box(q, {w, 1.0}));
      });
    };
    t["plus_thick"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double w = 0.42 + 0.04 * j1;
        return std::min(sd_box(p, {0.95, w}), sd_box(p, {w, 0.95}));
      });
    };
    t["double_cross"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double w = 0.15 + 0.02 * j1;
        return std::min({sd_box(p, {0.18, 1.0}), sd_box(p - V2{0, -0.4}, {0.6, w}), sd_box(p - V2{0, 0.25}, {0.9, w})});
      });
    };
    t["tee"] = [](double j1, double) {
      return Sdf([=](V2 p) {
        const double w = 0.2 + 0.03 * j1;
        return std::min(sd_box(p - V2{0, -0.75}, {1.0, w}), sd_box(p - V2{0, 0.15}, {w, 0.85}));
      });
    };
    // glyphs
    t["hbar"] = [](double j1, double) { return Sdf([=](V2 p) { return sd_box(p, {1.0, 0.28 + 0.04 * j1}); }); };
    t["vbar"] = [](double j1, double) { return Sdf([=](V2 p) { return sd_box(p, {0.28 + 0.04 * j1, 1.0}); }); };
    t["chevron"] = [](double j1, double) {
      return Sdf([pts = std::vector<V2>{{-0.85, -0.55}, {0.0, 0.55}, {0.85, -0.55}}, w = 0.17 + 0.03 * j1](V2 p) {
        return sd_polyline(p, pts, w);
      });
    };
    t["arrow"] = [](double j1, double) {
      return Sdf([head = std::vector<V2>{{0.05, -0.6}, {1.0, 0.0}, {0.05, 0.6}}, w = 0.13 + 0.03 * j1](V2 p) {
        return std::min(sd_box(p - V2{-0.45, 0}, {0.55, w}), sd_polygon(p, head));
      });
    };
    t["zigzag"] = [](double j1, double) {
      return Sdf([pts = std::vector<V2>{{-0.95, 0.45}, {-0.32, -0.45}, {0.32, 0.45}, {0.95, -0.45}},
                  w = 0.13 + 0.03 * j1](V2 p) { return sd_polyline(p, pts, w); });
    };
    return t;
  }();
  return table;
}

struct Latent {
  double cx, cy, radius, angle, j1, j2;
};

Latent draw_latent(std::uint64_t seed, int class_id, std::uint32_t sample_id, std::size_t side) {
  Rng rng = Rng::keyed({seed, static_cast<std::uint64_t>(class_id), sample_id, 1});
  const double s = static_cast<double>(side);
  Latent l;
  l.cx = s / 2.0 + rng.uniform(-0.1, 0.1) * s;
  l.cy = s / 2.0 + rng.uniform(-0.1, 0.1) * s;
  l.radius = rng.uniform(0.28, 0.36) * s;
  l.angle = rng.uniform(-0.2, 0.2);
  l.j1 = rng.uniform(-1.0, 1.0);
  l.j2 = rng.uniform(-1.0, 1.0);
  return l;
}

}  // namespace

bool has_recipe(const std::string& node_name) { return recipes().count(node_name) != 0; }

std::vector<float> render_sample(const std::string& node_name, int class_id, std::uint32_t sample_id,
                                 Domain modality, std::size_t side, std::uint64_t seed) {
  const auto it = recipes().find(node_name);
  if (it == recipes().end()) throw ContractViolation("no generator recipe for node '" + node_name + "'");
  const Latent lat = draw_latent(seed, class_id, sample_id, side);
  const Sdf shape = it->second(lat.j1, lat.j2);
  Rng rng = Rng::keyed({seed, static_cast<std::uint64_t>(class_id), sample_id, 2,
                        static_cast<std::uint64_t>(modality)});
  std::vector<float> px(side * side);

  if (modality == Domain::kPhoto) {
    // Either a light object on a dark ground or the reverse.
    const bool light_object = rng.bernoulli(0.5);
    const double bg = light_object ? rng.uniform(0.05, 0.35) : rng.uniform(0.65, 0.95);
    const double stripe_amp = rng.uniform(0.0, 0.12);
    const double stripe_freq = rng.uniform(0.3, 0.9);
    const double stripe_dir = rng.uniform(0.0, kPi);
    const double stripe_phase = rng.uniform(0.0, 2 * kPi);
    const double fg = light_object ? rng.uniform(0.6, 0.92) : rng.uniform(0.08, 0.4);
    const double shade_dir = rng.uniform(0.0, 2 * kPi);
    const double shade_amp = rng.uniform(0.0, 0.12);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const V2 pix{x + 0.5, y + 0.5};
        const V2 local = rotate({(pix.x - lat.cx) / lat.radius, (pix.y - lat.cy) / lat.radius}, -lat.angle);
        const double sd_px = shape(local) * lat.radius;
        const double cover = std::clamp(0.5 - sd_px, 0.0, 1.0);
        const double t = pix.x * std::cos(stripe_dir) + pix.y * std::sin(stripe_dir);
        const double back = bg + stripe_amp * std::sin(stripe_freq * t + stripe_phase) + rng.normal(0.0, 0.03);
        const double front = fg + shade_amp * (local.x * std::cos(shade_dir) + local.y * std::sin(shade_dir)) +
                             rng.normal(0.0, 0.02);
        px[y * side + x] = static_cast<float>(std::clamp(back * (1 - cover) + front * cover, 0.0, 1.0));
      }
    }
  } else {
    const double amp = rng.uniform(0.03, 0.08);
    const double w1 = rng.uniform(2.0, 5.0), w2 = rng.uniform(2.0, 5.0);
    const double p1 = rng.uniform(0.0, 2 * kPi), p2 = rng.uniform(0.0, 2 * kPi);
    const double extra_scale = rng.uniform(0.92, 1.08);
    const double extra_angle = rng.uniform(-0.1, 0.1);
    const double half_width = rng.uniform(0.55, 0.95);
    const double ink = rng.uniform(0.75, 0.95);
    const double radius = lat.radius * extra_scale;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const V2 pix{x + 0.5, y + 0.5};
        V2 local = rotate({(pix.x - lat.cx) / radius, (pix.y - lat.cy) / radius}, -lat.angle - extra_angle);
        local = {local.x + amp * std::sin(w1 * local.y + p1), local.y + amp * std::sin(w2 * local.x + p2)};
        const double sd_px = std::abs(shape(local)) * radius;
        const double stroke = std::clamp(half_width + 0.5 - sd_px, 0.0, 1.0);
        const double paper = 0.97 + rng.normal(0.0, 0.015);
        px[y * side + x] = static_cast<float>(std::clamp(paper - ink * stroke, 0.0, 1.0));
      }
    }
  }
  return px;
}

void SplitSpec::validate() const {
  const std::set<int> target(target_classes.begin(), target_classes.end());
  for (int c : source_classes) {
    if (target.count(c)) {
      throw SplitViolation(c, "split violation: class " + std::to_string(c) + " is in both the source and target sets");
    }
  }
  for (int c : original_classes) {
    if (target.count(c)) {
      throw SplitViolation(c, "split violation: class " + std::to_string(c) + " is in both the original and target sets");
    }
  }
  auto no_dups = [](const std::vector<int>& v, const char* which) {
    if (std::set<int>(v.begin(), v.end()).size() != v.size()) {
      throw ContractViolation(std::string("duplicate class id in the ") + which + " set");
    }
  };
  no_dups(original_classes, "original");
  no_dups(source_classes, "source");
  no_dups(target_classes, "target");
  if (original_classes.empty() || source_classes.empty() || target_classes.empty()) {
    throw ContractViolation("every split needs at least one class");
  }
  if (side < 8) throw ContractViolation("image side must be at least 8");
}

Dataset generate_dataset(const SplitSpec& spec, const Taxonomy& tax, const ClassMap& classes) {
  spec.validate();
  for (const auto* set : {&spec.original_classes, &spec.source_classes, &spec.target_classes}) {
    for (int c : *set) {
      const std::string& node = classes.node_name(c);
      if (!tax.contains(node)) throw LookupError("class " + std::to_string(c) + " maps to unknown node " + node);
      if (!has_recipe(node)) throw ContractViolation("no generator recipe for class " + std::to_string(c));
    }
  }
  Dataset data;
  data.spec = spec;
  auto emit = [&](std::vector<Sample>& out, int c, std::uint32_t id, Domain m) {
    out.push_back({c, m, id, render_sample(classes.node_name(c), c, id, m, spec.side, spec.seed)});
  };
  for (int c : spec.original_classes) {
    for (std::uint32_t i = 0; i < spec.original_photos; ++i) emit(data.original, c, kOriginalIdBase + i, Domain::kPhoto);
  }
  for (int c : spec.source_classes) {
    for (std::uint32_t i = 0; i < spec.source_photos; ++i) emit(data.source, c, kSourceIdBase + i, Domain::kPhoto);
    for (std::uint32_t i = 0; i < spec.source_sketches; ++i) emit(data.source, c, kSourceIdBase + i, Domain::kSketch);
  }
  for (int c : spec.target_classes) {
    for (std::uint32_t i = 0; i < spec.gallery_photos; ++i) {
      emit(data.target_gallery, c, kTargetIdBase + i, Domain::kPhoto);
    }
    for (std::uint32_t i = 0; i < spec.query_sketches; ++i) {
      emit(data.target_query, c, kTargetIdBase + static_cast<std::uint32_t>(spec.gallery_photos) + i, Domain::kSketch);
    }
  }
  return data;
}

std::vector<float> augment(std::span<const float> image, std::size_t side, Rng& rng, const AugmentConfig& cfg) {
  if (image.size() != side * side) throw ContractViolation("augment: image size does not match side");
  int dx = 0, dy = 0;
  if (cfg.max_shift > 0) {
    const auto span = static_cast<std::uint64_t>(2 * cfg.max_shift + 1);
    dx = static_cast<int>(rng.below(span)) - cfg.max_shift;
    dy = static_cast<int>(rng.below(span)) - cfg.max_shift;
  }
  const bool flip = cfg.flip_probability > 0.0 && rng.bernoulli(cfg.flip_probability);
  const int s = static_cast<int>(side);
  std::vector<float> out(image.size());
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      int sx = std::clamp(x - dx, 0, s - 1);
      const int sy = std::clamp(y - dy, 0, s - 1);
      if (flip) sx = s - 1 - sx;
      double v = image[static_cast<std::size_t>(sy * s + sx)];
      if (cfg.noise_sigma > 0.0) v += rng.normal(0.0, cfg.noise_sigma);
      out[static_cast<std::size_t>(y * s + x)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Tensor<float> stack_images(std::span<const Sample> samples, std::size_t side) {
  if (samples.empty()) throw ContractViolation("stack_images: no samples");
  std::vector<float> data;
  data.reserve(samples.size() * side * side);
  for (const Sample& s : samples) {
    if (s.pixels.size() != side * side) throw ContractViolation("stack_images: sample size mismatch");
    data.insert(data.end(), s.pixels.begin(), s.pixels.end());
  }
  return Tensor<float>({samples.size(), 1, side, side}, std::move(data));
}

std::vector<Domain> modalities(std::span<const Sample> samples) {
  std::vector<Domain> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.modality);
  return out;
}

void write_split(const std::filesystem::path& path, std::span<const Sample> samples, std::size_t side) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  binio::write_magic(out, kSplitMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(samples.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(side));
  binio::write_u32(out, static_cast<std::uint32_t>(side));
  for (const Sample& s : samples) {
    binio::write_u32(out, static_cast<std::uint32_t>(s.class_id));
    binio::write_u8(out, static_cast<std::uint8_t>(s.modality));
    binio::write_u32(out, s.sample_id);
    for (float v : s.pixels) binio::write_f32(out, v);
  }
  if (!out) throw ContractViolation("failed writing " + path.string());
}

std::vector<Sample> read_split(const std::filesystem::path& path, std::size_t* side_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path.string());
  binio::expect_magic(in, kSplitMagic);
  const std::uint32_t count = binio::read_u32(in);
  const std::uint32_t height = binio::read_u32(in);
  const std::uint32_t width = binio::read_u32(in);
  if (height != width) throw ContractViolation("non-square images are not supported");
  std::vector<Sample> samples(count);
  for (Sample& s : samples) {
    s.class_id = static_cast<int>(binio::read_u32(in));
    const std::uint8_t m = binio::read_u8(in);
    if (m > 1) throw ContractViolation("invalid modality byte in " + path.string());
    s.modality = static_cast<Domain>(m);
    s.sample_id = binio::read_u32(in);
    s.pixels.resize(static_cast<std::size_t>(height) * width);
    for (float& v : s.pixels) v = binio::read_f32(in);
  }
  if (side_out) *side_out = height;
  return samples;
}

namespace {

struct SplitFile {
  const char* name;
  const char* file;
  std::vector<Sample> Dataset::*member;
};

const SplitFile kSplits[] = {
    {"original", "original.bin", &Dataset::original},
    {"source", "source.bin", &Dataset::source},
    {"target_query", "target_query.bin", &Dataset::target_query},
    {"target_gallery", "target_gallery.bin", &Dataset::target_gallery},
};

}  // namespace

nlohmann::json make_manifest(const Dataset& data, const ClassMap& classes) {
  const SplitSpec& s = data.spec;
  nlohmann::json m;
  m["format_version"] = kManifestVersion;
  m["seed"] = s.seed;
  m["side"] = s.side;
  m["original_classes"] = s.original_classes;
  m["source_classes"] = s.source_classes;
  m["target_classes"] = s.target_classes;
  m["counts"] = {{"original_photos", s.original_photos},
                 {"source_photos", s.source_photos},
                 {"source_sketches", s.source_sketches},
                 {"gallery_photos", s.gallery_photos},
                 {"query_sketches", s.query_sketches}};
  std::set<int> used;
  for (const auto* v : {&s.original_classes, &s.source_classes, &s.target_classes}) used.insert(v->begin(), v->end());
  nlohmann::json cls = nlohmann::json::array();
  for (int c : used) cls.push_back({{"id", c}, {"node", classes.node_name(c)}});
  m["classes"] = cls;
  for (const auto& sp : kSplits) {
    m["splits"][sp.name] = {{"file", sp.file}, {"count", (data.*sp.member).size()}};
  }
  return m;
}

void write_dataset(const Dataset& data, const ClassMap& classes, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& sp : kSplits) write_split(dir / sp.file, data.*sp.member, data.spec.side);
  std::ofstream out(dir / "manifest.json");
  out << make_manifest(data, classes).dump(2) << "\n";
  if (!out) throw ContractViolation("failed writing manifest in " + dir.string());
}

namespace {

nlohmann::json read_manifest_file(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw LookupError("no manifest.json in " + dir.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed manifest: ") + e.what());
  }
}

SplitSpec spec_from_manifest(const nlohmann::json& m) {
  try {
    if (m.at("format_version").get<int>() != kManifestVersion) {
      throw ContractViolation("unsupported manifest version");
    }
    SplitSpec s;
    s.seed = m.at("seed").get<std::uint64_t>();
    s.side = m.at("side").get<std::size_t>();
    s.original_classes = m.at("original_classes").get<std::vector<int>>();
    s.source_classes = m.at("source_classes").get<std::vector<int>>();
    s.target_classes = m.at("target_classes").get<std::vector<int>>();
    const auto& c = m.at("counts");
    s.original_photos = c.at("original_photos").get<std::size_t>();
    s.source_photos = c.at("source_photos").get<std::size_t>();
    s.source_sketches = c.at("source_sketches").get<std::size_t>();
    s.gallery_photos = c.at("gallery_photos").get<std::size_t>();
    s.query_sketches = c.at("query_sketches").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& dir) {
  const nlohmann::json m = read_manifest_file(dir);
  validate_manifest(m, dir);
  Dataset data;
  data.spec = spec_from_manifest(m);
  for (const auto& sp : kSplits) {
    data.*sp.member = read_split(dir / m.at("splits").at(sp.name).at("file").get<std::string>());
  }
  return data;
}

void validate_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir) {
  const SplitSpec spec = spec_from_manifest(manifest);
  spec.validate();

  struct Expect {
    const char* split;
    const std::vector<int>* classes;
    std::map<Domain, std::size_t> per_class;
  };
  const Expect expectations[] = {
      {"original", &spec.original_classes, {{Domain::kPhoto, spec.original_photos}}},
      {"source", &spec.source_classes, {{Domain::kPhoto, spec.source_photos}, {Domain::kSketch, spec.source_sketches}}},
      {"target_query", &spec.target_classes, {{Domain::kSketch, spec.query_sketches}}},
      {"target_gallery", &spec.target_classes, {{Domain::kPhoto, spec.gallery_photos}}},
  };
  for (const Expect& e : expectations) {
    std::string file;
    try {
      file = manifest.at("splits").at(e.split).at("file").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ContractViolation(std::string("manifest lacks split ") + e.split);
    }
    std::size_t side = 0;
    const auto samples = read_split(dir / file, &side);
    if (side != spec.side) throw ContractViolation(std::string(e.split) + ": image side differs from manifest");
    const std::set<int> allowed(e.classes->begin(), e.classes->end());
    std::map<std::pair<int, Domain>, std::size_t> counts;
    for (const Sample& s : samples) {
      if (!allowed.count(s.class_id)) {
        throw SplitViolation(s.class_id, std::string(e.split) + " contains class " + std::to_string(s.class_id) +
                                             " outside its declared class set");
      }
      if (!e.per_class.count(s.modality)) {
        throw ContractViolation(std::string(e.split) + " contains a sample of the wrong modality");
      }
      ++counts[{s.class_id, s.modality}];
    }
    for (int c : *e.classes) {
      for (const auto& [modality, want] : e.per_class) {
        const auto it = counts.find({c, modality});
        const std::size_t got = it == counts.end() ? 0 : it->second;
        if (got != want) {
          throw ContractViolation(std::string(e.split) + ": class " + std::to_string(c) + " has " +
                                  std::to_string(got) + " samples, manifest says " + std::to_string(want));
        }
      }
    }
  }
}

}  // namespace sake
