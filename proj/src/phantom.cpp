#include "dcha/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <sstream>

#include "dcha/image_io.hpp"

namespace dcha {

void PhantomConfig::validate() const {
  require(grid_n >= 8, "config", "phantom grid_n too small");
  require(radius > 0 && radius <= grid_n / 2.0, "config",
          "phantom radius must lie in (0, grid_n/2]");
  require(lesion_prob >= 0.0 && lesion_prob <= 1.0, "config", "lesion_prob must be in [0,1]");
  require(lesion_radius_min > 0 && lesion_radius_min <= lesion_radius_max, "config",
          "bad lesion radius range");
  require(2.0 * lesion_radius_max < radius, "config",
          "lesion_radius_max must be under half the breast radius so a lesion can fit");
  require(lesion_intensity > 0, "config", "lesion_intensity must be positive");
  require(distractor_prob >= 0.0 && distractor_prob <= 1.0, "config",
          "distractor_prob must be in [0,1]");
  require(distractor_prob == 0.0 || 0.45 * radius >= 2.0 * lesion_radius_max + 1.0, "config",
          "breast radius too small to band two distractor rods");
  require(misalign_shift_max >= 0, "config", "misalign_shift_max must be >= 0");
  require(image_size >= 8 && image_size % 8 == 0, "config",
          "image_size must be divisible by 8");
  require(image_size <= 10.0 * radius, "config",
          "image_size too large for the voxel grid resolution");
}

namespace {

struct TextureField {
  // sum of a few random-phase cosines; smooth by construction
  static constexpr int kWaves = 6;
  double kx[kWaves], ky[kWaves], kz[kWaves], phase[kWaves];
  double amplitude;

  TextureField(const PhantomConfig& cfg, Rng& rng) {
    amplitude = cfg.background_texture_scale;
    for (int i = 0; i < kWaves; ++i) {
      // random direction, 0.5..1.5 cycles across the breast diameter
      double ux = rng.uniform(-1.0, 1.0), uy = rng.uniform(-1.0, 1.0), uz = rng.uniform(-1.0, 1.0);
      double norm = std::sqrt(ux * ux + uy * uy + uz * uz) + 1e-12;
      double freq = rng.uniform(0.5, 1.5) * 2.0 * M_PI / (2.0 * cfg.radius);
      kx[i] = ux / norm * freq;
      ky[i] = uy / norm * freq;
      kz[i] = uz / norm * freq;
      phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    }
  }

  double operator()(double x, double y, double z) const {
    double s = 0.0;
    for (int i = 0; i < kWaves; ++i) s += std::cos(kx[i] * x + ky[i] * y + kz[i] * z + phase[i]);
    return amplitude * s / double(kWaves);
  }
};

}  // namespace

Volume generate_volume(const PhantomConfig& cfg, Rng& rng, bool malignant) {
  cfg.validate();
  Volume vol;
  vol.grid_n = cfg.grid_n;
  vol.radius = cfg.radius;
  vol.density.assign(std::size_t(cfg.grid_n) * cfg.grid_n * cfg.grid_n, 0.0);
  TextureField texture(cfg, rng);

  if (malignant) {
    double rad = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
    double fit = cfg.radius - rad;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      double x = rng.uniform(-fit, fit);
      double y = rng.uniform(rad, fit);
      double z = rng.uniform(-fit, fit);
      if (x * x + y * y + z * z <= fit * fit) {
        vol.lesion = LesionSphere{x, y, z, rad};
        placed = true;
      }
    }
    require(placed, "phantom", "could not place a lesion inside the half-ball after 100 tries");
  }

  if (rng.uniform(0.0, 1.0) < cfg.distractor_prob) {
    // Confounders with matched per-view statistics: every view of every case
    // shows one compact blob and one faint streak. In benign cases the blobs
    // come from two rods at different heights, so only a cross-view row
    // consistency check can tell them from a malignant case, where the blob
    // is the same lesion in both views (plus a streak-only Cross rod).
    auto place_rod = [&](RodAxis axis, double ylo_band, double yhi_band) {
      double rad = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
      // Cross rods are shorter so their streaks match the others' length
      double half_len = axis == RodAxis::Cross ? M_SQRT2 * rad : 2.0 * rad;
      double fit = cfg.radius - rad;
      // highest y where a horizontal rod of this length still fits in the ball
      double ytop = std::sqrt(std::max(0.0, fit * fit - half_len * half_len)) - 0.5;
      // rows covered by the rod (y +- rad) must stay inside the band
      double ylo = std::max(rad, ylo_band + rad);
      double yhi = std::min(ytop, yhi_band - rad);
      require(yhi > ylo, "phantom", "no room for a distractor rod in its height band");
      for (int attempt = 0; attempt < 200; ++attempt) {
        double y = rng.uniform(ylo, yhi);
        // center anywhere in the horizontal disc that keeps both rod ends
        // (plus the radius margin) inside the ball
        double cap = std::sqrt(fit * fit - y * y) - half_len;
        double ang = rng.uniform(0.0, 2.0 * M_PI);
        double rr = cap * std::sqrt(rng.uniform(0.0, 1.0));
        double x = rr * std::cos(ang), z = rr * std::sin(ang);
        // prefer rows clear of the lesion, but give up on that before
        // failing: the band split is the load-bearing separation
        if (attempt < 100 && vol.lesion &&
            std::fabs(y - vol.lesion->y) < rad + 1.0 + vol.lesion->radius)
          continue;
        vol.distractors.push_back({x, y, z, rad, half_len, axis});
        return;
      }
      fail("phantom", "could not place a distractor rod after 200 tries");
    };
    double split = 0.45 * cfg.radius;
    if (malignant) {
      place_rod(RodAxis::Cross, 0.0, cfg.radius);
    } else {
      // which view's blob sits low is random, so row position alone carries
      // no label signal
      bool cc_low = rng.uniform(0.0, 1.0) < 0.5;
      place_rod(cc_low ? RodAxis::AlongCC : RodAxis::AlongMLO, 0.0, split - 1.0);
      place_rod(cc_low ? RodAxis::AlongMLO : RodAxis::AlongCC, split + 1.0, cfg.radius);
    }
  }

  const int g = cfg.grid_n;
  const double r2 = cfg.radius * cfg.radius;
  std::size_t idx = 0;
  for (int ix = 0; ix < g; ++ix) {
    double x = ix + 0.5 - g / 2.0;
    for (int iy = 0; iy < g; ++iy) {
      double y = iy + 0.5;
      for (int iz = 0; iz < g; ++iz, ++idx) {
        double z = iz + 0.5 - g / 2.0;
        if (y < 0.0 || x * x + y * y + z * z > r2) continue;  // outside the half-ball
        double d = std::max(0.05, 1.0 + texture(x, y, z));
        if (vol.lesion) {
          double dx = x - vol.lesion->x, dy = y - vol.lesion->y, dz = z - vol.lesion->z;
          if (dx * dx + dy * dy + dz * dz <= vol.lesion->radius * vol.lesion->radius)
            d *= cfg.lesion_intensity;
        }
        for (const auto& rod : vol.distractors) {
          // intensity excess matches a sphere's central line integral:
          // (m-1)*2h == (li-1)*2r
          double ax = rod.axis == RodAxis::AlongCC ? 0.0
                      : rod.axis == RodAxis::AlongMLO ? M_SQRT1_2
                                                      : 1.0;
          double az = rod.axis == RodAxis::AlongCC ? 1.0
                      : rod.axis == RodAxis::AlongMLO ? M_SQRT1_2
                                                      : 0.0;
          double dx = x - rod.x, dy = y - rod.y, dz = z - rod.z;
          double t = dx * ax + dz * az;
          double px = dx - t * ax, pz = dz - t * az;
          double q = t * t / (rod.half_len * rod.half_len) +
                     (px * px + dy * dy + pz * pz) / (rod.radius * rod.radius);
          if (q <= 1.0) d *= 1.0 + (cfg.lesion_intensity - 1.0) * rod.radius / rod.half_len;
        }
        vol.density[idx] = d;
      }
    }
  }
  return vol;
}

namespace {

inline int bin_of(double t, int s) {
  int b = int(std::floor(t * s));
  return std::min(s - 1, std::max(0, b));
}

}  // namespace

namespace {

// box splat: spread the normalized interval [t0,t1] over the bins it
// overlaps, weights proportional to overlap and summing to 1
struct Bins {
  int idx[12];
  double w[12];
  int n = 0;
};

inline Bins box_bins(double t0, double t1, int s) {
  double p0 = t0 * s, p1 = t1 * s;
  Bins b;
  int lo = int(std::floor(p0));
  int hi = int(std::floor(p1 - 1e-12));
  for (int i = lo; i <= hi && b.n < 12; ++i) {
    double ov = std::min(p1, double(i + 1)) - std::max(p0, double(i));
    if (ov <= 0.0) continue;
    b.idx[b.n] = std::min(s - 1, std::max(0, i));
    b.w[b.n] = ov / (p1 - p0);
    ++b.n;
  }
  return b;
}

}  // namespace

Image project(const Volume& vol, View view, const PhantomConfig& cfg) {
  const int s = cfg.image_size;
  const int g = vol.grid_n;
  const double r = vol.radius;
  const double span = (view == View::CC) ? 2.0 * r : 2.0 * r * std::sqrt(2.0);
  const double halfw = (view == View::CC) ? 0.5 : std::sqrt(2.0) / 2.0;  // voxel footprint
  Image img(s, s);
  std::size_t idx = 0;
  for (int ix = 0; ix < g; ++ix) {
    double x = ix + 0.5 - g / 2.0;
    for (int iy = 0; iy < g; ++iy) {
      double ylo = double(iy), yhi = double(iy + 1);
      Bins ry = box_bins(ylo / r, yhi / r, s);
      for (int iz = 0; iz < g; ++iz, ++idx) {
        double d = vol.density[idx];
        if (d == 0.0) continue;
        double z = iz + 0.5 - g / 2.0;
        double u = (view == View::CC) ? x : (x - z) / std::sqrt(2.0);
        Bins cx = box_bins((u - halfw + span / 2.0) / span, (u + halfw + span / 2.0) / span, s);
        for (int a = 0; a < ry.n; ++a) {
          int row = s - 1 - ry.idx[a];  // chest wall on the bottom edge
          double wy = d * ry.w[a];
          for (int bC = 0; bC < cx.n; ++bC) img.at(row, cx.idx[bC]) += wy * cx.w[bC];
        }
      }
    }
  }
  return img;
}

void normalize_pair(Image& a, Image& b) {
  double mx = 0.0;
  for (double v : a.v) mx = std::max(mx, v);
  for (double v : b.v) mx = std::max(mx, v);
  if (mx <= 0.0) return;
  for (double& v : a.v) v /= mx;
  for (double& v : b.v) v /= mx;
}

BBox project_lesion_bbox(const LesionSphere& lesion, View view, const PhantomConfig& cfg) {
  const int s = cfg.image_size;
  const double r = cfg.radius;
  int ylo = bin_of((lesion.y - lesion.radius) / r, s);
  int yhi = bin_of((lesion.y + lesion.radius) / r, s);
  BBox box;
  box.y0 = s - 1 - yhi;
  box.y1 = s - 1 - ylo;
  if (view == View::CC) {
    box.x0 = bin_of((lesion.x - lesion.radius + r) / (2.0 * r), s);
    box.x1 = bin_of((lesion.x + lesion.radius + r) / (2.0 * r), s);
  } else {
    double u = (lesion.x - lesion.z) / std::sqrt(2.0);
    double span = r * std::sqrt(2.0);
    box.x0 = bin_of((u - lesion.radius + span) / (2.0 * span), s);
    box.x1 = bin_of((u + lesion.radius + span) / (2.0 * span), s);
  }
  return box;
}

std::vector<int> apply_misalignment(Image& img, Rng& rng, const PhantomConfig& cfg) {
  const int sigma = cfg.misalign_shift_max;
  std::vector<int> shifts(img.h, 0);
  if (sigma == 0) return shifts;
  int cur = rng.uniform_int(-sigma, sigma);
  for (int r = 0; r < img.h; ++r) {
    shifts[r] = cur;
    cur = std::min(sigma, std::max(-sigma, cur + rng.uniform_int(-1, 1)));
  }
  for (int r = 0; r < img.h; ++r) {
    int sft = shifts[r];
    if (sft == 0) continue;
    std::vector<double> row(img.w, 0.0);
    for (int c = 0; c < img.w; ++c) {
      int src = c - sft;
      if (src >= 0 && src < img.w) row[c] = img.at(r, src);
    }
    for (int c = 0; c < img.w; ++c) img.at(r, c) = row[c];
  }
  return shifts;
}

DualViewCase generate_case(const PhantomConfig& cfg, std::uint64_t case_index, bool malignant) {
  Rng rng = Rng(cfg.seed).child(case_index);
  Volume vol = generate_volume(cfg, rng, malignant);
  DualViewCase cs;
  {
    std::ostringstream id;
    id << "case" << std::setw(5) << std::setfill('0') << case_index;
    cs.case_id = id.str();
  }
  cs.label = malignant ? 1 : 0;
  cs.img_cc = project(vol, View::CC, cfg);
  cs.img_mlo = project(vol, View::MLO, cfg);
  normalize_pair(cs.img_cc, cs.img_mlo);
  if (vol.lesion) {
    cs.bbox_cc = project_lesion_bbox(*vol.lesion, View::CC, cfg);
    cs.bbox_mlo = project_lesion_bbox(*vol.lesion, View::MLO, cfg);
  }
  if (cfg.misalign_shift_max > 0) {
    auto shifts = apply_misalignment(cs.img_mlo, rng, cfg);
    if (cs.bbox_mlo) {
      int mid = (cs.bbox_mlo->y0 + cs.bbox_mlo->y1) / 2;
      int sft = shifts[std::min(std::max(mid, 0), int(shifts.size()) - 1)];
      cs.bbox_mlo->x0 = std::min(cfg.image_size - 1, std::max(0, cs.bbox_mlo->x0 + sft));
      cs.bbox_mlo->x1 = std::min(cfg.image_size - 1, std::max(0, cs.bbox_mlo->x1 + sft));
    }
  }
  return cs;
}

std::vector<DualViewCase> generate_cases(const PhantomConfig& cfg, int n_cases) {
  require(n_cases >= 1, "args", "need at least one case");
  cfg.validate();
  int n_pos = int(std::lround(cfg.lesion_prob * n_cases));
  std::vector<int> labels(n_cases, 0);
  std::fill(labels.begin(), labels.begin() + n_pos, 1);
  Rng label_rng(cfg.seed ^ 0xa5a5a5a5ull);
  label_rng.shuffle(labels);

  std::vector<DualViewCase> cases(n_cases);
  parallel_for(n_cases, [&](int i) { cases[i] = generate_case(cfg, i, labels[i] == 1); });
  return cases;
}

std::string generate_dataset(const PhantomConfig& cfg, int n_cases, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, "io", "cannot create output directory " + out_dir + ": " + ec.message());

  auto cases = generate_cases(cfg, n_cases);
  std::vector<ManifestEntry> entries;
  entries.reserve(cases.size());
  for (const auto& cs : cases) {
    ManifestEntry e;
    e.case_id = cs.case_id;
    e.label = cs.label;
    e.cc_path = cs.case_id + "_cc.pgm";
    e.mlo_path = cs.case_id + "_mlo.pgm";
    e.bbox_cc = cs.bbox_cc;
    e.bbox_mlo = cs.bbox_mlo;
    write_pgm((fs::path(out_dir) / e.cc_path).string(), cs.img_cc);
    write_pgm((fs::path(out_dir) / e.mlo_path).string(), cs.img_mlo);
    entries.push_back(std::move(e));
  }
  std::string manifest = (fs::path(out_dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  return manifest;
}

namespace {

std::string bbox_to_str(const std::optional<BBox>& b) {
  if (!b) return "";
  std::ostringstream os;
  os << b->x0 << ":" << b->y0 << ":" << b->x1 << ":" << b->y1;
  return os.str();
}

std::optional<BBox> bbox_from_str(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  BBox b;
  char c1, c2, c3;
  std::istringstream is(s);
  is >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1;
  require(bool(is) && c1 == ':' && c2 == ':' && c3 == ':', "format",
          "bad bbox '" + s + "' in " + where);
  return b;
}

}  // namespace

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "io", "cannot open manifest for writing: " + path);
  os << "case_id,label,cc_path,mlo_path,bbox_cc,bbox_mlo\n";
  for (const auto& e : entries)
    os << e.case_id << "," << e.label << "," << e.cc_path << "," << e.mlo_path << ","
       << bbox_to_str(e.bbox_cc) << "," << bbox_to_str(e.bbox_mlo) << "\n";
  require(bool(os), "io", "write failure on manifest: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), "io", "cannot open manifest: " + path);
  std::string line;
  std::getline(is, line);
  require(line.rfind("case_id,", 0) == 0, "format", "missing manifest header in " + path);
  std::vector<ManifestEntry> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    require(fields.size() == 6, "format", "bad manifest row in " + path + ": " + line);
    ManifestEntry e;
    e.case_id = fields[0];
    e.label = std::stoi(fields[1]);
    require(e.label == 0 || e.label == 1, "format", "bad label in " + path + ": " + line);
    e.cc_path = fields[2];
    e.mlo_path = fields[3];
    e.bbox_cc = bbox_from_str(fields[4], path);
    e.bbox_mlo = bbox_from_str(fields[5], path);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dcha
