#pragma once

#include <optional>
#include <string>

#include "dcha/common.hpp"

namespace dcha {

// Inclusive pixel rectangle, (x0,y0) top-left, (x1,y1) bottom-right.
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains(int row, int col) const {
    return row >= y0 && row <= y1 && col >= x0 && col <= x1;
  }
  bool operator==(const BBox&) const = default;
};

enum class View { CC, MLO };

struct PhantomConfig {
  int grid_n = 64;               // voxel grid resolution per axis
  double radius = 27.7;          // breast radius in voxels
  double lesion_prob = 0.5;      // fraction of malignant cases
  double lesion_radius_min = 4.0;
  double lesion_radius_max = 7.0;
  double lesion_intensity = 3.0;  // density multiplier inside the lesion
  double background_texture_scale = 0.4;
  double distractor_prob = 0.0;  // chance of a lesion-mimicking rod pair, any label
  int misalign_shift_max = 0;    // in-row shift bound (pixels), applied to the MLO view
  int image_size = 64;           // output side length, divisible by 8
  std::uint64_t seed = 1234;

  void validate() const;
};

struct DualViewCase {
  std::string case_id;
  Image img_cc, img_mlo;
  int label = 0;
  std::optional<BBox> bbox_cc, bbox_mlo;
};

struct LesionSphere {
  double x = 0, y = 0, z = 0, radius = 0;
};

// Prolate spheroid mimicking tissue superposition. Elongated along a view's
// ray direction it projects to a blob indistinguishable from a lesion in
// that view (same dome profile and central line integral) but smears into a
// fainter elongated smudge in the other; a Cross spindle (along x) smears
// in both views.
enum class RodAxis { AlongCC, AlongMLO, Cross };

struct DistractorRod {
  double x = 0, y = 0, z = 0;  // center
  double radius = 0, half_len = 0;  // minor and major semi-axes
  RodAxis axis = RodAxis::AlongCC;
};

// Half-ball density volume, chest wall on the y=0 plane. Coordinates:
// x,z in [-grid_n/2, grid_n/2), y in [0, grid_n), voxel centers at
// half-integers.
struct Volume {
  int grid_n = 0;
  double radius = 0;
  std::vector<double> density;  // [ix][iy][iz], row-major
  std::optional<LesionSphere> lesion;
  std::vector<DistractorRod> distractors;

  double at(int ix, int iy, int iz) const {
    return density[(std::size_t(ix) * grid_n + iy) * grid_n + iz];
  }
};

Volume generate_volume(const PhantomConfig& cfg, Rng& rng, bool malignant);

// Parallel line integral with zero y-component: CC along +z, MLO along
// (z+x)/sqrt(2). Row index = quantized distance to the chest wall, with
// the chest wall on the bottom image edge. Unnormalized intensities.
Image project(const Volume& vol, View view, const PhantomConfig& cfg);

// Joint normalization of a view pair by their common max.
void normalize_pair(Image& a, Image& b);

// Projected bounding box of the lesion sphere, in image pixels.
BBox project_lesion_bbox(const LesionSphere& lesion, View view, const PhantomConfig& cfg);

// Per-row integer shifts in [-max, max], adjacent rows differing by at
// most 1; zero fill at the edges. Returns the shift applied at each row.
std::vector<int> apply_misalignment(Image& img, Rng& rng, const PhantomConfig& cfg);

DualViewCase generate_case(const PhantomConfig& cfg, std::uint64_t case_index, bool malignant);

// In-memory dataset with exactly round(lesion_prob * n) malignant cases,
// deterministic under cfg.seed.
std::vector<DualViewCase> generate_cases(const PhantomConfig& cfg, int n_cases);

// Writes {case_id}_cc.pgm / {case_id}_mlo.pgm plus manifest.csv under
// out_dir; returns the manifest path.
std::string generate_dataset(const PhantomConfig& cfg, int n_cases, const std::string& out_dir);

// --- manifest ---
struct ManifestEntry {
  std::string case_id;
  int label = 0;
  std::string cc_path, mlo_path;
  std::optional<BBox> bbox_cc, bbox_mlo;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace dcha
