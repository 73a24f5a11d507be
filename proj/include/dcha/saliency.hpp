#pragma once

#include "dcha/model.hpp"

namespace dcha {

struct SaliencyMap {
  Image heatmap;    // feature-map resolution, max-normalized to [0,1]
  Image upsampled;  // input resolution
  int peak_row = 0, peak_col = 0;  // argmax of upsampled, first in row-major order
};

// Gradient-weighted activation map over the attended feature map: channel
// weights are the spatial average of d p_view / d R_view, combined with
// ReLU, bilinearly upsampled and max-normalized.
SaliencyMap grad_cam(DchaModel& model, const DualViewCase& cs, View view);

// P6 overlay of the grayscale view with the heatmap on the red channel.
void overlay_and_save(const DualViewCase& cs, View view, const SaliencyMap& map,
                      const std::string& path);

struct SaliencyHit {
  std::string case_id;
  View view;
  int peak_row = 0, peak_col = 0;
  int hit = 0;  // peak inside the lesion bbox
};

void write_hits(const std::string& path, const std::vector<SaliencyHit>& hits);

// Bilinear resize of a [0,1] image.
Image resize_bilinear(const Image& img, int out_h, int out_w);

}  // namespace dcha
