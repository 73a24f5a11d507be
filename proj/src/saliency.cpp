#include "dcha/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dcha/image_io.hpp"

namespace dcha {

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "args", "resize target must be positive");
  Image out(out_h, out_w);
  for (int r = 0; r < out_h; ++r)
    for (int c = 0; c < out_w; ++c) {
      double sr = (r + 0.5) * img.h / out_h - 0.5;
      double sc = (c + 0.5) * img.w / out_w - 0.5;
      int r0 = int(std::floor(sr)), c0 = int(std::floor(sc));
      double fr = sr - r0, fc = sc - c0;
      auto px = [&](int rr, int cc) {
        rr = std::min(img.h - 1, std::max(0, rr));
        cc = std::min(img.w - 1, std::max(0, cc));
        return img.at(rr, cc);
      };
      out.at(r, c) = (1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
                     fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1));
    }
  return out;
}

SaliencyMap grad_cam(DchaModel& model, const DualViewCase& cs, View view) {
  const Image& img = (view == View::CC) ? cs.img_cc : cs.img_mlo;
  Tape tape;
  Binder bind(tape, true);
  Tensor input = tape.tensor({1, img.h, img.w}, img.v);
  ViewOutput out = view_forward(input, model, view, bind);
  tape.backward(out.p);

  const Shape& rs = out.r.shape();
  int c = rs[0], h = rs[1], w = rs[2];
  const auto& rdata = out.r.data();
  const auto& rgrad = out.r.grad();

  std::vector<double> weight(std::size_t(c), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int i = 0; i < h * w; ++i) s += rgrad[std::size_t(ch) * h * w + i];
    weight[std::size_t(ch)] = s / double(h * w);
  }

  SaliencyMap map;
  map.heatmap = Image(h, w);
  double mx = 0.0;
  for (int i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (int ch = 0; ch < c; ++ch) s += weight[std::size_t(ch)] * rdata[std::size_t(ch) * h * w + i];
    double v = std::max(0.0, s);
    map.heatmap.v[std::size_t(i)] = v;
    mx = std::max(mx, v);
  }
  if (mx > 0.0)
    for (double& v : map.heatmap.v) v /= mx;

  map.upsampled = resize_bilinear(map.heatmap, img.h, img.w);
  double best = -1.0;
  for (int r = 0; r < img.h; ++r)
    for (int col = 0; col < img.w; ++col)
      if (map.upsampled.at(r, col) > best) {
        best = map.upsampled.at(r, col);
        map.peak_row = r;
        map.peak_col = col;
      }
  return map;
}

void overlay_and_save(const DualViewCase& cs, View view, const SaliencyMap& map,
                      const std::string& path) {
  const Image& img = (view == View::CC) ? cs.img_cc : cs.img_mlo;
  require(map.upsampled.h == img.h && map.upsampled.w == img.w, "shape",
          "saliency map does not match the image");
  Image r(img.h, img.w), g(img.h, img.w), b(img.h, img.w);
  for (std::size_t i = 0; i < img.v.size(); ++i) {
    double gray = img.v[i], heat = map.upsampled.v[i];
    r.v[i] = gray + (1.0 - gray) * heat;
    g.v[i] = gray * (1.0 - heat);
    b.v[i] = gray * (1.0 - heat);
  }
  write_ppm(path, r, g, b);
}

void write_hits(const std::string& path, const std::vector<SaliencyHit>& hits) {
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "io", "cannot open hits file for writing: " + path);
  os << "case_id,view,peak_row,peak_col,hit\n";
  for (const auto& h : hits)
    os << h.case_id << "," << (h.view == View::CC ? "cc" : "mlo") << "," << h.peak_row << ","
       << h.peak_col << "," << h.hit << "\n";
  require(bool(os), "io", "write failure on hits file: " + path);
}

}  // namespace dcha
