#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "xdtl/image.hpp"
#include "xdtl/tlcore.hpp"

namespace xdtl::features {

enum class Kind { pixels, hog, lbp, dsift };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);  // throws ArgumentError

struct HogConfig {
  int cell_size = 8;
  int block_cells = 2;   // block is block_cells x block_cells cells
  int block_stride = 1;  // in cells
  int bins = 9;          // unsigned orientations over [0, 180)
  double l2_clip = 0.2;
};

struct LbpConfig {
  int radius = 1;
  int neighbors = 8;
  int grid = 8;  // grid x grid cells
};

struct DsiftConfig {
  int step = 8;
  int patch = 16;
  int spatial_bins = 4;
  int orient_bins = 8;  // signed orientations over [0, 360)
};

struct FeatureConfig {
  Kind kind = Kind::pixels;
  HogConfig hog;
  LbpConfig lbp;
  DsiftConfig dsift;
  bool standardize = false;

  void validate() const;
};

// Descriptor length for an image of the given size; throws ArgumentError when
// the image is too small for the configuration.
Eigen::Index descriptor_length(const FeatureConfig& cfg, Eigen::Index height, Eigen::Index width);

Eigen::VectorXd extract_pixels(const ImageTensor& img);

/// HOG with central-difference gradients (replicate border), unsigned
/// orientation binning with linear interpolation between neighbouring bins,
/// and per-block L2 normalization clipped at l2_clip then renormalized.
/// Bin b is centred on b * 180 / bins degrees.
Eigen::VectorXd extract_hog(const ImageTensor& img, const HogConfig& cfg = {});

// Per-pixel LBP codes (bilinear neighbour sampling, replicate border). Bit p
// is set when the neighbour at angle 2*pi*p/P is >= the centre.
Eigen::MatrixXi lbp_codes(const ImageTensor& img, const LbpConfig& cfg = {});

// Concatenated L1-normalized per-cell histograms of lbp_codes.
Eigen::VectorXd extract_lbp(const ImageTensor& img, const LbpConfig& cfg = {});

/// Dense SIFT on a regular grid: 4x4 spatial x 8 orientation histograms per
/// patch, Gaussian weighted (sigma = patch / 2), L2 normalized with 0.2
/// clipping and renormalization. Orientation bin b is centred on b * 360 / B
/// degrees with linear interpolation. Patches are concatenated row-major.
Eigen::VectorXd extract_dsift(const ImageTensor& img, const DsiftConfig& cfg = {});

Eigen::VectorXd extract(const ImageTensor& img, const FeatureConfig& cfg);

// One column per image, in input order. All images must share one size.
FeatureMatrix batch_extract(std::span<const ImageTensor> images, const FeatureConfig& cfg);

// Per-feature z-scoring with statistics from a training matrix. Features
// with zero variance are only centred.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;

  static Standardizer fit(const FeatureMatrix& train);
  FeatureMatrix apply(const FeatureMatrix& X) const;
};

/// Centred PCA projection onto the leading `dim` principal directions of a
/// training matrix, followed by one global scale so that training columns
/// have unit mean squared norm. Signs are fixed so the largest-magnitude
/// loading of each direction is positive.
struct PcaProjection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;  // d x dim, orthonormal columns
  double scale = 1.0;

  static PcaProjection fit(const FeatureMatrix& train, Eigen::Index dim);
  FeatureMatrix apply(const FeatureMatrix& X) const;
};

}  // namespace xdtl::features
