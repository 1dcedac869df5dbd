#include "xdtl/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xdtl/errors.hpp"

namespace xdtl::features {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::pixels: return "pixels";
    case Kind::hog: return "hog";
    case Kind::lbp: return "lbp";
    case Kind::dsift: return "dsift";
  }
  return "unknown";
}

Kind kind_from_string(std::string_view name) {
  if (name == "pixels") return Kind::pixels;
  if (name == "hog") return Kind::hog;
  if (name == "lbp") return Kind::lbp;
  if (name == "dsift") return Kind::dsift;
  throw ArgumentError("unknown feature kind: " + std::string(name));
}

void FeatureConfig::validate() const {
  if (hog.cell_size < 1 || hog.block_cells < 1 || hog.block_stride < 1 || hog.bins < 1 ||
      !(hog.l2_clip > 0.0)) {
    throw ArgumentError("HOG parameters must be positive");
  }
  if (lbp.radius < 1 || lbp.neighbors < 1 || lbp.neighbors > 16 || lbp.grid < 1) {
    throw ArgumentError("LBP parameters must be positive (neighbors <= 16)");
  }
  if (dsift.step < 1 || dsift.patch < 1 || dsift.spatial_bins < 1 || dsift.orient_bins < 1 ||
      dsift.patch % dsift.spatial_bins != 0) {
    throw ArgumentError("DSIFT parameters must be positive with patch divisible by spatial bins");
  }
}

namespace {

struct HogLayout {
  Index cells_y, cells_x, blocks_y, blocks_x;
};

HogLayout hog_layout(const HogConfig& cfg, Index h, Index w) {
  HogLayout l{h / cfg.cell_size, w / cfg.cell_size, 0, 0};
  if (l.cells_y < cfg.block_cells || l.cells_x < cfg.block_cells) {
    throw ArgumentError("HOG: image smaller than one block");
  }
  l.blocks_y = (l.cells_y - cfg.block_cells) / cfg.block_stride + 1;
  l.blocks_x = (l.cells_x - cfg.block_cells) / cfg.block_stride + 1;
  return l;
}

struct DsiftLayout {
  Index grid_y, grid_x;
};

DsiftLayout dsift_layout(const DsiftConfig& cfg, Index h, Index w) {
  if (cfg.patch > h || cfg.patch > w) throw ArgumentError("DSIFT: patch larger than image");
  return {(h - cfg.patch) / cfg.step + 1, (w - cfg.patch) / cfg.step + 1};
}

void check_lbp_grid(const LbpConfig& cfg, Index h, Index w) {
  if (h / cfg.grid < 1 || w / cfg.grid < 1) throw ArgumentError("LBP: degenerate cell grid");
}

struct Gradients {
  MatrixXd magnitude;
  MatrixXd angle;  // degrees
};

// Central differences with replicate borders. Angles in [0, period).
Gradients gradients(const MatrixXd& I, double period) {
  const Index h = I.rows();
  const Index w = I.cols();
  Gradients g{MatrixXd(h, w), MatrixXd(h, w)};
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double gx = 0.5 * (I(y, std::min(x + 1, w - 1)) - I(y, std::max<Index>(x - 1, 0)));
      const double gy = 0.5 * (I(std::min(y + 1, h - 1), x) - I(std::max<Index>(y - 1, 0), x));
      g.magnitude(y, x) = std::hypot(gx, gy);
      double a = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      a = std::fmod(a, period);
      if (a < 0.0) a += period;
      if (a >= period) a -= period;
      g.angle(y, x) = a;
    }
  }
  return g;
}

// Splits `weight` between the two bins whose centres bracket `angle`.
template <class Hist>
void vote(Hist&& hist, Index offset, int bins, double period, double angle, double weight) {
  const double pos = angle * bins / period;
  const double base = std::floor(pos);
  const double frac = pos - base;
  const Index lo = static_cast<Index>(base) % bins;
  const Index hi = (lo + 1) % bins;
  hist(offset + lo) += weight * (1.0 - frac);
  hist(offset + hi) += weight * frac;
}

void normalize_clip(Eigen::Ref<VectorXd> v, double clip) {
  constexpr double kGuard = 1e-12;
  v /= v.norm() + kGuard;
  v = v.cwiseMin(clip);
  v /= v.norm() + kGuard;
}

void check_image(const ImageTensor& img) {
  if (img.height() < 1 || img.width() < 1) throw ArgumentError("empty image");
}

}  // namespace

Index descriptor_length(const FeatureConfig& cfg, Index h, Index w) {
  switch (cfg.kind) {
    case Kind::pixels:
      return h * w;
    case Kind::hog: {
      const HogLayout l = hog_layout(cfg.hog, h, w);
      return l.blocks_y * l.blocks_x * cfg.hog.block_cells * cfg.hog.block_cells * cfg.hog.bins;
    }
    case Kind::lbp:
      check_lbp_grid(cfg.lbp, h, w);
      return static_cast<Index>(cfg.lbp.grid) * cfg.lbp.grid * (Index{1} << cfg.lbp.neighbors);
    case Kind::dsift: {
      const DsiftLayout l = dsift_layout(cfg.dsift, h, w);
      return l.grid_y * l.grid_x * cfg.dsift.spatial_bins * cfg.dsift.spatial_bins *
             cfg.dsift.orient_bins;
    }
  }
  throw ArgumentError("unknown feature kind");
}

VectorXd extract_pixels(const ImageTensor& img) {
  check_image(img);
  const Index h = img.height();
  const Index w = img.width();
  VectorXd v(h * w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) v(y * w + x) = img.pixels(y, x);
  return v;
}

VectorXd extract_hog(const ImageTensor& img, const HogConfig& cfg) {
  check_image(img);
  const HogLayout l = hog_layout(cfg, img.height(), img.width());
  const Gradients g = gradients(img.pixels, 180.0);
  const int bins = cfg.bins;

  // Cell histograms, indexed (cy * cells_x + cx) * bins + b.
  VectorXd cells = VectorXd::Zero(l.cells_y * l.cells_x * bins);
  for (Index cy = 0; cy < l.cells_y; ++cy) {
    for (Index cx = 0; cx < l.cells_x; ++cx) {
      const Index offset = (cy * l.cells_x + cx) * bins;
      for (int dy = 0; dy < cfg.cell_size; ++dy) {
        for (int dx = 0; dx < cfg.cell_size; ++dx) {
          const Index y = cy * cfg.cell_size + dy;
          const Index x = cx * cfg.cell_size + dx;
          vote(cells, offset, bins, 180.0, g.angle(y, x), g.magnitude(y, x));
        }
      }
    }
  }

  const Index block_len = static_cast<Index>(cfg.block_cells) * cfg.block_cells * bins;
  VectorXd out(l.blocks_y * l.blocks_x * block_len);
  for (Index by = 0; by < l.blocks_y; ++by) {
    for (Index bx = 0; bx < l.blocks_x; ++bx) {
      auto block = out.segment((by * l.blocks_x + bx) * block_len, block_len);
      Index k = 0;
      for (int iy = 0; iy < cfg.block_cells; ++iy) {
        for (int ix = 0; ix < cfg.block_cells; ++ix) {
          const Index cy = by * cfg.block_stride + iy;
          const Index cx = bx * cfg.block_stride + ix;
          block.segment(k, bins) = cells.segment((cy * l.cells_x + cx) * bins, bins);
          k += bins;
        }
      }
      normalize_clip(block, cfg.l2_clip);
    }
  }
  return out;
}

Eigen::MatrixXi lbp_codes(const ImageTensor& img, const LbpConfig& cfg) {
  check_image(img);
  const Index h = img.height();
  const Index w = img.width();
  const MatrixXd& I = img.pixels;

  struct Offset {
    double dy, dx;
  };
  std::vector<Offset> offsets;
  for (int p = 0; p < cfg.neighbors; ++p) {
    const double a = 2.0 * std::numbers::pi * p / cfg.neighbors;
    auto snap = [](double v) {
      const double r = std::round(v);
      return std::abs(v - r) < 1e-12 ? r : v;
    };
    offsets.push_back({snap(-cfg.radius * std::sin(a)), snap(cfg.radius * std::cos(a))});
  }

  auto at = [&](Index y, Index x) {
    return I(std::clamp<Index>(y, 0, h - 1), std::clamp<Index>(x, 0, w - 1));
  };
  // Lerp form keeps constant neighbourhoods exact.
  auto sample = [&](double sy, double sx) {
    const double fy0 = std::floor(sy);
    const double fx0 = std::floor(sx);
    const double fy = sy - fy0;
    const double fx = sx - fx0;
    const auto y0 = static_cast<Index>(fy0);
    const auto x0 = static_cast<Index>(fx0);
    const double top = at(y0, x0) + fx * (at(y0, x0 + 1) - at(y0, x0));
    const double bottom = at(y0 + 1, x0) + fx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
    return top + fy * (bottom - top);
  };

  Eigen::MatrixXi codes(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double centre = I(y, x);
      int code = 0;
      for (int p = 0; p < cfg.neighbors; ++p) {
        const Offset& o = offsets[static_cast<std::size_t>(p)];
        const double v = sample(static_cast<double>(y) + o.dy, static_cast<double>(x) + o.dx);
        if (v >= centre) code |= 1 << p;
      }
      codes(y, x) = code;
    }
  }
  return codes;
}

VectorXd extract_lbp(const ImageTensor& img, const LbpConfig& cfg) {
  check_image(img);
  check_lbp_grid(cfg, img.height(), img.width());
  const Eigen::MatrixXi codes = lbp_codes(img, cfg);
  const Index cell_h = img.height() / cfg.grid;
  const Index cell_w = img.width() / cfg.grid;
  const Index bins = Index{1} << cfg.neighbors;
  VectorXd out = VectorXd::Zero(static_cast<Index>(cfg.grid) * cfg.grid * bins);
  const double inv = 1.0 / static_cast<double>(cell_h * cell_w);
  for (int gy = 0; gy < cfg.grid; ++gy) {
    for (int gx = 0; gx < cfg.grid; ++gx) {
      const Index offset = (static_cast<Index>(gy) * cfg.grid + gx) * bins;
      for (Index y = 0; y < cell_h; ++y)
        for (Index x = 0; x < cell_w; ++x) out(offset + codes(gy * cell_h + y, gx * cell_w + x)) += inv;
    }
  }
  return out;
}

VectorXd extract_dsift(const ImageTensor& img, const DsiftConfig& cfg) {
  check_image(img);
  const DsiftLayout l = dsift_layout(cfg, img.height(), img.width());
  const Gradients g = gradients(img.pixels, 360.0);
  const int sb = cfg.spatial_bins;
  const int ob = cfg.orient_bins;
  const int bin_px = cfg.patch / sb;
  const Index desc_len = static_cast<Index>(sb) * sb * ob;
  const double sigma = cfg.patch / 2.0;
  const double centre = cfg.patch / 2.0;

  MatrixXd weight(cfg.patch, cfg.patch);
  for (int u = 0; u < cfg.patch; ++u)
    for (int v = 0; v < cfg.patch; ++v) {
      const double du = u + 0.5 - centre;
      const double dv = v + 0.5 - centre;
      weight(u, v) = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
    }

  VectorXd out = VectorXd::Zero(l.grid_y * l.grid_x * desc_len);
  for (Index py = 0; py < l.grid_y; ++py) {
    for (Index px = 0; px < l.grid_x; ++px) {
      auto desc = out.segment((py * l.grid_x + px) * desc_len, desc_len);
      for (int u = 0; u < cfg.patch; ++u) {
        for (int v = 0; v < cfg.patch; ++v) {
          const Index y = py * cfg.step + u;
          const Index x = px * cfg.step + v;
          const Index cell = static_cast<Index>(u / bin_px) * sb + v / bin_px;
          vote(desc, cell * ob, ob, 360.0, g.angle(y, x), g.magnitude(y, x) * weight(u, v));
        }
      }
      normalize_clip(desc, 0.2);
    }
  }
  return out;
}

VectorXd extract(const ImageTensor& img, const FeatureConfig& cfg) {
  switch (cfg.kind) {
    case Kind::pixels: return extract_pixels(img);
    case Kind::hog: return extract_hog(img, cfg.hog);
    case Kind::lbp: return extract_lbp(img, cfg.lbp);
    case Kind::dsift: return extract_dsift(img, cfg.dsift);
  }
  throw ArgumentError("unknown feature kind");
}

FeatureMatrix batch_extract(std::span<const ImageTensor> images, const FeatureConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw ArgumentError("batch_extract: no images");
  const Index h = images.front().height();
  const Index w = images.front().width();
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w) {
      throw ArgumentError("batch_extract: mixed image sizes");
    }
  }
  FeatureMatrix X(descriptor_length(cfg, h, w), static_cast<Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) X.col(static_cast<Index>(i)) = extract(images[i], cfg);
  return X;
}

Standardizer Standardizer::fit(const FeatureMatrix& train) {
  validate_features(train, "standardization data");
  Standardizer s;
  s.mean = train.rowwise().mean();
  const MatrixXd centred = train.colwise() - s.mean;
  const VectorXd var = centred.rowwise().squaredNorm() / static_cast<double>(train.cols());
  s.inv_std = var.unaryExpr([](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 1.0; });
  return s;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& X) const {
  if (X.rows() != mean.size()) throw ArgumentError("standardizer: dimension mismatch");
  return inv_std.asDiagonal() * (X.colwise() - mean);
}

PcaProjection PcaProjection::fit(const FeatureMatrix& train, Index dim) {
  validate_features(train, "PCA training data");
  if (dim < 1) throw ArgumentError("PCA: dimension must be >= 1");
  PcaProjection p;
  p.mean = train.rowwise().mean();
  const MatrixXd centred = train.colwise() - p.mean;
  const Index rank_cap = std::min(train.rows(), train.cols());
  if (dim > rank_cap) {
    throw ArgumentError("PCA: requested dimension " + std::to_string(dim) +
                        " exceeds min(d, n) = " + std::to_string(rank_cap));
  }
  // QR first when samples are few: the Jacobi SVD then only sees an n x n
  // factor.
  if (centred.cols() < centred.rows()) {
    Eigen::HouseholderQR<MatrixXd> qr(centred);
    const Index n = centred.cols();
    const MatrixXd R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<MatrixXd> svd(R, Eigen::ComputeFullU);
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(centred.rows(), n);
    p.basis = Q * svd.matrixU().leftCols(dim);
  } else {
    Eigen::JacobiSVD<MatrixXd> svd(centred, Eigen::ComputeThinU);
    p.basis = svd.matrixU().leftCols(dim);
  }
  for (Index j = 0; j < dim; ++j) {
    Index arg = 0;
    p.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (p.basis(arg, j) < 0.0) p.basis.col(j) = -p.basis.col(j);
  }
  const double ms = (p.basis.transpose() * centred).colwise().squaredNorm().mean();
  p.scale = ms > 0.0 ? 1.0 / std::sqrt(ms) : 1.0;
  return p;
}

FeatureMatrix PcaProjection::apply(const FeatureMatrix& X) const {
  if (X.rows() != mean.size()) throw ArgumentError("PCA: dimension mismatch");
  return scale * (basis.transpose() * (X.colwise() - mean));
}

}  // namespace xdtl::features
