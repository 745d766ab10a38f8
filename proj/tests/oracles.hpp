#pragma once

// Independent reference implementations used only by the tests. They are
// written from the definitions, pixel by pixel or by brute force, and share
// no code paths with the library beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "vrd/dataset.hpp"
#include "vrd/raster.hpp"
#include "vrd/transforms.hpp"

namespace oracle {

inline bool in_box(const vrd::BBox& b, int x, int y) {
  return x >= b.xmin && x < b.xmax && y >= b.ymin && y < b.ymax;
}

inline double source(const vrd::Raster& img, int c, int y, int x) {
  return img.channels() == 1 ? img.at(0, y, x) : img.at(c, y, x);
}

inline double luma(const vrd::Raster& img, int y, int x) {
  return 0.299 * source(img, 0, y, x) + 0.587 * source(img, 1, y, x) +
         0.114 * source(img, 2, y, x);
}

inline std::vector<double> gaussian_weights(double sigma, int side) {
  std::vector<double> w(side);
  const int c = (side - 1) / 2;
  double sum = 0.0;
  for (int i = 0; i < side; ++i) {
    const double d = i - c;
    w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Separable Gaussian blur of the RGB-expanded image evaluated per output
/// pixel: horizontal sums first, then vertical, borders replicated.
inline vrd::Raster separable_blur(const vrd::Raster& img, double sigma, int side) {
  const auto w = gaussian_weights(sigma, side);
  const int r = (side - 1) / 2;
  const int h = img.height(), wd = img.width();
  vrd::Raster horiz(h, wd, 3), out(h, wd, 3);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        double acc = 0.0;
        for (int t = 0; t < side; ++t) {
          acc += w[t] * source(img, c, y, std::clamp(x + t - r, 0, wd - 1));
        }
        horiz.at(c, y, x) = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < wd; ++x) {
        double acc = 0.0;
        for (int t = 0; t < side; ++t) acc += w[t] * horiz.at(c, std::clamp(y + t - r, 0, h - 1), x);
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

/// Dense 2-D convolution with the outer-product kernel, replicated borders.
inline vrd::Raster dense_blur(const vrd::Raster& img, const std::vector<double>& w) {
  const int side = static_cast<int>(w.size());
  const int r = (side - 1) / 2;
  vrd::Raster out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        long double acc = 0.0L;
        for (int i = 0; i < side; ++i) {
          for (int j = 0; j < side; ++j) {
            const int sy = std::clamp(y + i - r, 0, img.height() - 1);
            const int sx = std::clamp(x + j - r, 0, img.width() - 1);
            acc += static_cast<long double>(w[i]) * w[j] * img.at(c, sy, sx);
          }
        }
        out.at(c, y, x) = static_cast<double>(acc);
      }
    }
  }
  return out;
}

/// Pre-resize output of `method`, computed pixel by pixel in image
/// coordinates over the union rectangle.
inline vrd::Raster reference_compose(const vrd::RelInstance& inst, const vrd::Raster& img,
                                     vrd::Method method) {
  using vrd::Method;
  const auto& s = inst.subject.bbox;
  const auto& o = inst.object.bbox;
  const int x0 = std::min(s.xmin, o.xmin), y0 = std::min(s.ymin, o.ymin);
  const int x1 = std::max(s.xmax, o.xmax), y1 = std::max(s.ymax, o.ymax);
  const int h = y1 - y0, w = x1 - x0;
  const int channels = (method == Method::UnionWBSC || method == Method::UnionWBBSC) ? 1 : 3;
  vrd::Raster out(h, w, channels);

  vrd::Raster blurred;
  if (auto sigma = vrd::method_sigma(method)) {
    blurred = separable_blur(img, *sigma, 2 * static_cast<int>(std::ceil(3 * *sigma)) + 1);
  }

  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const bool ins = in_box(s, x, y), ino = in_box(o, x, y);
      const bool fg = ins || ino;
      const bool ms = inst.subject.mask && inst.subject.mask->at(x, y);
      const bool mo = inst.object.mask && inst.object.mask->at(x, y);
      for (int c = 0; c < channels; ++c) {
        double v = 0.0;
        switch (method) {
          case Method::Union: v = source(img, c, y, x); break;
          case Method::UnionWB: v = fg ? source(img, c, y, x) : 0.0; break;
          case Method::UnionWBSC: v = fg ? luma(img, y, x) : 0.0; break;
          case Method::UnionWBB: v = c == 1 ? ins : c == 2 ? ino : 0.0; break;
          case Method::UnionWBBSC: v = ins ? 1.0 : ino ? 0.5 : 0.0; break;
          case Method::UnionWBandB:
            v = c == 1 ? (ins ? luma(img, y, x) : 0.0) : c == 2 ? (ino ? luma(img, y, x) : 0.0) : 0.0;
            break;
          case Method::Segment: v = (ms || mo) ? source(img, c, y, x) : 0.0; break;
          case Method::SegmentB: v = c == 1 ? ms : c == 2 ? mo : 0.0; break;
          case Method::BlurSigma3:
          case Method::BlurSigma5:
          case Method::BlurSigma7: v = fg ? source(img, c, y, x) : blurred.at(c, y, x); break;
        }
        out.at(c, y - y0, x - x0) = v;
      }
    }
  }
  return out;
}

struct TransformCase {
  vrd::RelInstance instance;
  vrd::Raster image;
};

inline vrd::BinaryMask random_mask_in(const vrd::BBox& b, int h, int w, std::mt19937_64& rng) {
  vrd::BinaryMask m(h, w);
  for (int y = b.ymin; y < b.ymax; ++y) {
    for (int x = b.xmin; x < b.xmax; ++x) m.at(x, y) = (rng() % 10) < 7 ? 1 : 0;
  }
  m.at(b.xmin, b.ymin) = 1;
  return m;
}

/// 16x16 images holding a 2x3 subject box and a 4x4 object box at
/// case-dependent offsets, with random masks inside the boxes. Every fifth
/// case uses a single-channel source.
inline TransformCase crafted_case(int index) {
  std::mt19937_64 rng(1000 + index);
  const int size = 16;
  const int channels = index % 5 == 4 ? 1 : 3;
  TransformCase tc{{}, vrd::Raster(size, size, channels)};
  for (double& v : tc.image.data()) v = static_cast<double>(rng() % 256) / 255.0;

  const int sx = static_cast<int>(rng() % (size - 3 + 1));
  const int sy = static_cast<int>(rng() % (size - 2 + 1));
  const int ox = static_cast<int>(rng() % (size - 4 + 1));
  const int oy = static_cast<int>(rng() % (size - 4 + 1));
  tc.instance.instance_id = "case" + std::to_string(index);
  tc.instance.image_id = tc.instance.instance_id + ".png";
  tc.instance.subject.bbox = {sx, sy, sx + 3, sy + 2};
  tc.instance.object.bbox = {ox, oy, ox + 4, oy + 4};
  tc.instance.subject.mask = random_mask_in(tc.instance.subject.bbox, size, size, rng);
  tc.instance.object.mask = random_mask_in(tc.instance.object.bbox, size, size, rng);
  return tc;
}

/// Recall@k by fully sorting each row by (score desc, index asc).
inline double sorted_recall(const std::vector<std::vector<double>>& rows,
                            const std::vector<int>& labels, int k) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<int> idx(rows[r].size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return rows[r][a] > rows[r][b]; });
    if (std::find(idx.begin(), idx.begin() + k, labels[r]) != idx.begin() + k) ++hits;
  }
  return static_cast<double>(hits) / rows.size();
}

/// Zero-shot subset by nested scans over both splits.
inline std::vector<std::size_t> brute_zero_shot(const vrd::DatasetSplit& train,
                                                const vrd::DatasetSplit& test) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < test.instances.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < train.instances.size() && !seen; ++j) {
      seen = test.instances[i].subject.category_id == train.instances[j].subject.category_id &&
             test.instances[i].predicate_id == train.instances[j].predicate_id &&
             test.instances[i].object.category_id == train.instances[j].object.category_id;
    }
    if (!seen) keep.push_back(i);
  }
  return keep;
}

}  // namespace oracle
