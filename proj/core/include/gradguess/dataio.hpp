#pragma once

#include <fstream>
#include <string>

#include "gradguess/mlp.hpp"
#include "gradguess/metrics.hpp"
#include "gradguess/rng.hpp"
#include "gradguess/tensor.hpp"

namespace gg {

/// H x W x C image geometry, needed only for augmentations. Pixels are
/// stored plane-major (all of channel 0, then channel 1, ...).
struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t dim() const { return height * width * channels; }
};

struct Dataset {
  std::string name;
  Mat<float> features;      // num_examples x input_dim
  std::vector<int> labels;  // in [0, class_count)
  int class_count = 0;
  ImageGeometry geometry;   // zero if not image-shaped

  std::size_t size() const { return features.rows; }
  std::size_t input_dim() const { return features.cols; }
};

/// Per-feature standardization statistics, computed from the TRAIN
/// split and applied unchanged everywhere else.
struct Normalization {
  Vec<float> mean;
  Vec<float> std;
};

Normalization compute_normalization(const Dataset& train);
void apply_normalization(Dataset& ds, const Normalization& stats);
/// Per-channel variant for image data (one mean/std per channel).
Normalization compute_channel_normalization(const Dataset& train);

/// Big-endian IDX (MNIST distribution format); pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);

/// CIFAR-10 binary batches: 3073-byte records, label byte then R/G/B
/// planes; flattened to 3072-dim rows scaled to [0,1].
Dataset load_cifar_binary(const std::vector<std::string>& paths);

/// Gaussian blobs at random unit-direction centers scaled by
/// `separation`; balanced classes. Deterministic per rng stream.
Dataset synth_clusters(int classes, std::size_t dim, std::size_t per_class, double separation,
                       RngStream& rng);

struct AugmentFlags {
  bool hflip = false;
  std::size_t crop_pad = 0;
};

/// Per-example random horizontal flips (p = 0.5) and zero-padded random
/// crops. Requires image geometry.
Mat<float> augment(const Mat<float>& batch, const ImageGeometry& geom, RngStream& rng,
                   const AugmentFlags& flags);

struct BatchPlan {
  std::size_t batch_size = 512;
  std::uint64_t shuffle_seed = 0;
  bool drop_last = false;
};

/// Deterministic per-(seed, epoch) shuffled batch indices covering the
/// epoch exactly once.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_examples,
                                                    const BatchPlan& plan, std::uint64_t epoch);

Mat<float> gather_rows(const Mat<float>& features, const std::vector<std::size_t>& idx);
std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx);

/// Streaming CSV writer for MetricRecords (RFC-4180 quoting).
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void write(const MetricRecord& rec);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

void write_metrics(const std::vector<MetricRecord>& records, const std::string& path);

/// Little-endian "GGCK" checkpoint; round-trips bit-exactly.
void save_checkpoint(const MlpParams<float>& params, const std::string& path);
MlpParams<float> load_checkpoint(const std::string& path);

}  // namespace gg
