#pragma once

#include "dcha/common.hpp"
#include "dcha/phantom.hpp"

namespace dcha {

// Chest wall as a line near the bottom image edge: perpendicular distance
// `offset` (pixels) at the horizontal center, tilted by `angle` radians.
struct ChestWallLine {
  double angle = 0.0;   // |angle| < pi/4 for accepted fits
  double offset = 0.0;  // distance from the bottom edge at the center column
};

struct AugmentConfig {
  double rotation_max_deg = 10.0;
  double hflip_prob = 0.5;
};

struct PreprocessConfig {
  int target_size = 256;               // divisible by 8
  double bg_threshold_quantile = 0.8;  // gradient-magnitude quantile
  double bg_intensity_min = 0.02;      // pixels above this join the candidate foreground
  double fit_residual_max = 2.0;       // rms pixels
  AugmentConfig augment;

  void validate() const;
};

// 0/1 foreground mask stored as an Image.
struct Foreground {
  Image img;   // input with background zeroed
  Image mask;  // 1.0 foreground, 0.0 background
};

// Threshold the gradient magnitude at the configured quantile, keep the
// largest connected component, fill its interior holes, zero the rest.
Foreground remove_background(const Image& img, const PreprocessConfig& cfg);

// Least-squares line through the bottom-most foreground pixel of each
// column. The bottom edge must be the one with maximal foreground contact.
ChestWallLine fit_chest_wall(const Image& img, const Image& mask, const PreprocessConfig& cfg);

// Rigid rotation+translation placing the chest-wall line on the bottom
// edge, then bilinear resize to target_size x target_size.
Image align_and_resize(const Image& img, const ChestWallLine& line, const PreprocessConfig& cfg);

// Full pipeline for one view.
Image preprocess_view(const Image& img, const PreprocessConfig& cfg);

// Shared random rotation and horizontal flip across both views of a case;
// bounding boxes follow the same transform.
void augment_case(DualViewCase& cs, Rng& rng, const AugmentConfig& cfg);

// Bilinear sample with zero fill outside the image.
double bilinear_at(const Image& img, double row, double col);

// Rotate about the image center by `deg` degrees, zero fill.
Image rotate_image(const Image& img, double deg);

}  // namespace dcha
