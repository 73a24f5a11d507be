#include "dcha/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace dcha {

void PreprocessConfig::validate() const {
  require(target_size >= 8 && target_size % 8 == 0, "config",
          "target_size must be divisible by 8");
  require(bg_threshold_quantile >= 0.0 && bg_threshold_quantile < 1.0, "config",
          "bg_threshold_quantile must be in [0,1)");
  require(fit_residual_max > 0.0, "config", "fit_residual_max must be positive");
  require(augment.rotation_max_deg >= 0.0, "config", "rotation_max_deg must be >= 0");
  require(augment.hflip_prob >= 0.0 && augment.hflip_prob <= 1.0, "config",
          "hflip_prob must be in [0,1]");
}

namespace {

Image gradient_magnitude(const Image& img) {
  Image g(img.h, img.w);
  auto px = [&](int r, int c) {
    r = std::min(img.h - 1, std::max(0, r));
    c = std::min(img.w - 1, std::max(0, c));
    return img.at(r, c);
  };
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      double gx = 0.5 * (px(r, c + 1) - px(r, c - 1));
      double gy = 0.5 * (px(r + 1, c) - px(r - 1, c));
      g.at(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  return g;
}

// 4-connected flood fill over a predicate; returns the number of cells labeled
template <class Pred>
std::size_t flood(std::vector<int>& label, int h, int w, int sr, int sc, int id, Pred inside) {
  std::deque<std::pair<int, int>> q;
  std::size_t count = 0;
  auto push = [&](int r, int c) {
    if (r < 0 || r >= h || c < 0 || c >= w) return;
    std::size_t i = std::size_t(r) * w + c;
    if (label[i] != 0 || !inside(r, c)) return;
    label[i] = id;
    ++count;
    q.emplace_back(r, c);
  };
  push(sr, sc);
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    push(r - 1, c);
    push(r + 1, c);
    push(r, c - 1);
    push(r, c + 1);
  }
  return count;
}

}  // namespace

Foreground remove_background(const Image& img, const PreprocessConfig& cfg) {
  cfg.validate();
  Image g = gradient_magnitude(img);
  std::vector<double> sorted = g.v;
  std::sort(sorted.begin(), sorted.end());
  double thr = sorted[std::size_t(cfg.bg_threshold_quantile * (sorted.size() - 1))];

  const int h = img.h, w = img.w;
  // candidate foreground: detected edges plus anything clearly lit
  auto cand = [&](int r, int c) {
    return g.at(r, c) > thr || img.at(r, c) > cfg.bg_intensity_min;
  };
  std::vector<int> label(std::size_t(h) * w, 0);
  int best_id = 0;
  std::size_t best_size = 0;
  int next_id = 1;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (label[std::size_t(r) * w + c] != 0 || !cand(r, c)) continue;
      int id = next_id++;
      std::size_t size = flood(label, h, w, r, c, id, cand);
      if (size > best_size) {
        best_size = size;
        best_id = id;
      }
    }
  require(best_id != 0, "preprocess", "empty foreground: no pixels above the thresholds");

  // keep the winning component, then close its interior by flooding the
  // background from the image border
  std::vector<int> bg(std::size_t(h) * w, 0);
  auto open = [&](int r, int c) { return label[std::size_t(r) * w + c] != best_id; };
  for (int r = 0; r < h; ++r) {
    flood(bg, h, w, r, 0, 1, open);
    flood(bg, h, w, r, w - 1, 1, open);
  }
  for (int c = 0; c < w; ++c) {
    flood(bg, h, w, 0, c, 1, open);
    flood(bg, h, w, h - 1, c, 1, open);
  }

  Foreground out;
  out.img = Image(h, w);
  out.mask = Image(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool fg = bg[std::size_t(r) * w + c] == 0;
      out.mask.at(r, c) = fg ? 1.0 : 0.0;
      out.img.at(r, c) = fg ? img.at(r, c) : 0.0;
    }
  return out;
}

ChestWallLine fit_chest_wall(const Image& img, const Image& mask, const PreprocessConfig& cfg) {
  (void)img;
  require(mask.h > 1 && mask.w > 1, "shape", "mask too small");
  const int h = mask.h, w = mask.w;
  auto fg = [&](int r, int c) { return mask.at(r, c) > 0.5; };

  // edge contact: scanlines whose nearest foreground pixel lies within a
  // band of a quarter of the image size from that edge
  int band = std::max(2, std::max(h, w) / 4);
  int contact[4] = {0, 0, 0, 0};  // bottom, top, left, right
  for (int c = 0; c < w; ++c) {
    for (int r = h - 1; r >= h - band; --r)
      if (fg(r, c)) {
        ++contact[0];
        break;
      }
    for (int r = 0; r < band; ++r)
      if (fg(r, c)) {
        ++contact[1];
        break;
      }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < band; ++c)
      if (fg(r, c)) {
        ++contact[2];
        break;
      }
    for (int c = w - 1; c >= w - band; --c)
      if (fg(r, c)) {
        ++contact[3];
        break;
      }
  }
  require(contact[0] >= std::max({contact[1], contact[2], contact[3]}), "preprocess",
          "chest wall is not along the bottom image edge");

  // bottom-most foreground pixel per column, as distance from the bottom edge
  std::vector<double> xs, ds;
  for (int c = 0; c < w; ++c)
    for (int r = h - 1; r >= 0; --r)
      if (fg(r, c)) {
        xs.push_back(c - (w - 1) / 2.0);
        ds.push_back(double(h - 1 - r));
        break;
      }
  require(xs.size() >= 2, "preprocess", "not enough boundary pixels to fit the chest wall");

  auto fit = [](const std::vector<double>& x, const std::vector<double>& d) {
    double n = double(x.size()), sx = 0, sd = 0, sxx = 0, sxd = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sx += x[i];
      sd += d[i];
      sxx += x[i] * x[i];
      sxd += x[i] * d[i];
    }
    double denom = n * sxx - sx * sx;
    require(denom > 1e-9, "preprocess", "degenerate chest wall fit");
    double slope = (n * sxd - sx * sd) / denom;
    return std::pair<double, double>{slope, (sd - slope * sx) / n};
  };
  auto [slope, intercept] = fit(xs, ds);

  // one robust refit: drop points far off the first line (the curved ends
  // of the breast contour), keep the straight chest-wall segment
  {
    std::vector<double> xs2, ds2;
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (std::fabs(ds[i] - (slope * xs[i] + intercept)) <= 2.0) {
        xs2.push_back(xs[i]);
        ds2.push_back(ds[i]);
      }
    if (xs2.size() >= std::max<std::size_t>(2, xs.size() / 2)) {
      std::tie(slope, intercept) = fit(xs2, ds2);
      xs = std::move(xs2);
      ds = std::move(ds2);
    }
  }

  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double e = ds[i] - (slope * xs[i] + intercept);
    rss += e * e;
  }
  double rms = std::sqrt(rss / double(xs.size()));
  if (rms > cfg.fit_residual_max) {
    std::ostringstream os;
    os << "chest wall fit residual " << rms << " exceeds " << cfg.fit_residual_max;
    fail("preprocess", os.str());
  }

  ChestWallLine line;
  line.angle = std::atan(slope);
  line.offset = intercept;
  require(std::fabs(line.angle) < M_PI / 4.0, "preprocess", "chest wall tilt exceeds 45 degrees");
  return line;
}

double bilinear_at(const Image& img, double row, double col) {
  int r0 = int(std::floor(row)), c0 = int(std::floor(col));
  double fr = row - r0, fc = col - c0;
  auto px = [&](int r, int c) {
    if (r < 0 || r >= img.h || c < 0 || c >= img.w) return 0.0;
    return img.at(r, c);
  };
  return (1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
         fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1));
}

Image align_and_resize(const Image& img, const ChestWallLine& line, const PreprocessConfig& cfg) {
  cfg.validate();
  const int ts = cfg.target_size;
  const double cx = (img.w - 1) / 2.0;
  const double by = img.h - 1.0;  // bottom row
  const double ct = std::cos(line.angle), st = std::sin(line.angle);
  Image out(ts, ts);
  for (int ro = 0; ro < ts; ++ro)
    for (int co = 0; co < ts; ++co) {
      // output pixel center in source-scale aligned coordinates
      double xa = (co + 0.5) * img.w / ts - 0.5;
      double ya = (ro + 0.5) * img.h / ts - 0.5;
      double vx = xa - cx, vy = ya - by;
      // undo the alignment rotation, then step back up to the fitted line
      double xs = cx + vx * ct + vy * st;
      double ys = by - line.offset - vx * st + vy * ct;
      out.at(ro, co) = bilinear_at(img, ys, xs);
    }
  return out;
}

Image preprocess_view(const Image& img, const PreprocessConfig& cfg) {
  Foreground fg = remove_background(img, cfg);
  ChestWallLine line = fit_chest_wall(fg.img, fg.mask, cfg);
  return align_and_resize(fg.img, line, cfg);
}

Image rotate_image(const Image& img, double deg) {
  if (deg == 0.0) return img;
  double th = deg * M_PI / 180.0;
  double ct = std::cos(th), st = std::sin(th);
  double cr = (img.h - 1) / 2.0, cc = (img.w - 1) / 2.0;
  Image out(img.h, img.w);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      double vy = r - cr, vx = c - cc;
      double ys = cr + vx * st + vy * ct;  // inverse rotation
      double xs = cc + vx * ct - vy * st;
      out.at(r, c) = bilinear_at(img, ys, xs);
    }
  return out;
}

namespace {

void hflip(Image& img) {
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w / 2; ++c) std::swap(img.at(r, c), img.at(r, img.w - 1 - c));
}

BBox rotate_bbox(const BBox& b, double deg, int h, int w) {
  double th = deg * M_PI / 180.0;
  double ct = std::cos(th), st = std::sin(th);
  double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
  double corners[4][2] = {{double(b.y0), double(b.x0)},
                          {double(b.y0), double(b.x1)},
                          {double(b.y1), double(b.x0)},
                          {double(b.y1), double(b.x1)}};
  double rlo = 1e30, rhi = -1e30, clo = 1e30, chi = -1e30;
  for (auto& p : corners) {
    double vy = p[0] - cr, vx = p[1] - cc;
    // forward rotation of the box corner
    double rn = cr - vx * st + vy * ct;
    double cn = cc + vx * ct + vy * st;
    rlo = std::min(rlo, rn);
    rhi = std::max(rhi, rn);
    clo = std::min(clo, cn);
    chi = std::max(chi, cn);
  }
  BBox out;
  out.y0 = std::max(0, int(std::floor(rlo)));
  out.y1 = std::min(h - 1, int(std::ceil(rhi)));
  out.x0 = std::max(0, int(std::floor(clo)));
  out.x1 = std::min(w - 1, int(std::ceil(chi)));
  return out;
}

}  // namespace

void augment_case(DualViewCase& cs, Rng& rng, const AugmentConfig& cfg) {
  double deg = cfg.rotation_max_deg > 0.0
                   ? rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
                   : 0.0;
  bool flip = rng.uniform(0.0, 1.0) < cfg.hflip_prob;
  if (deg != 0.0) {
    int h = cs.img_cc.h, w = cs.img_cc.w;
    cs.img_cc = rotate_image(cs.img_cc, deg);
    cs.img_mlo = rotate_image(cs.img_mlo, deg);
    if (cs.bbox_cc) cs.bbox_cc = rotate_bbox(*cs.bbox_cc, deg, h, w);
    if (cs.bbox_mlo) cs.bbox_mlo = rotate_bbox(*cs.bbox_mlo, deg, h, w);
  }
  if (flip) {
    hflip(cs.img_cc);
    hflip(cs.img_mlo);
    int w = cs.img_cc.w;
    auto mirror = [w](BBox b) {
      int x0 = w - 1 - b.x1, x1 = w - 1 - b.x0;
      b.x0 = x0;
      b.x1 = x1;
      return b;
    };
    if (cs.bbox_cc) cs.bbox_cc = mirror(*cs.bbox_cc);
    if (cs.bbox_mlo) cs.bbox_mlo = mirror(*cs.bbox_mlo);
  }
}

}  // namespace dcha
