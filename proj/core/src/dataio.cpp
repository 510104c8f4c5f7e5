#include "gradguess/dataio.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>

namespace gg {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecordBytes = 3073;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) {
    throw std::runtime_error("truncated file at offset " + std::to_string(in.tellg()) + ": " +
                             path);
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

}  // namespace

Normalization compute_normalization(const Dataset& train) {
  const std::size_t n = train.size(), d = train.input_dim();
  Normalization stats;
  stats.mean = Vec<float>(d);
  stats.std = Vec<float>(d);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = train.features.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) stats.mean[j] += row[j];
  }
  for (auto& x : stats.mean.data) x /= static_cast<float>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = train.features.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) {
      const float c = row[j] - stats.mean[j];
      stats.std[j] += c * c;
    }
  }
  for (auto& x : stats.std.data) x = std::max(std::sqrt(x / static_cast<float>(n)), 1e-8f);
  return stats;
}

Normalization compute_channel_normalization(const Dataset& train) {
  const auto& g = train.geometry;
  if (g.dim() != train.input_dim())
    throw std::invalid_argument("channel normalization requires image geometry");
  const std::size_t plane = g.height * g.width;
  Normalization per_feature = compute_normalization(train);
  Normalization stats;
  stats.mean = Vec<float>(train.input_dim());
  stats.std = Vec<float>(train.input_dim());
  // pool the per-feature moments within each channel plane
  for (std::size_t c = 0; c < g.channels; ++c) {
    float mean = 0;
    for (std::size_t t = 0; t < plane; ++t) mean += per_feature.mean[c * plane + t];
    mean /= static_cast<float>(plane);
    float var = 0;
    for (std::size_t t = 0; t < plane; ++t) {
      const float m = per_feature.mean[c * plane + t];
      const float s = per_feature.std[c * plane + t];
      var += s * s + (m - mean) * (m - mean);
    }
    const float sd = std::max(std::sqrt(var / static_cast<float>(plane)), 1e-8f);
    for (std::size_t t = 0; t < plane; ++t) {
      stats.mean[c * plane + t] = mean;
      stats.std[c * plane + t] = sd;
    }
  }
  return stats;
}

void apply_normalization(Dataset& ds, const Normalization& stats) {
  if (stats.mean.size() != ds.input_dim())
    throw std::invalid_argument("normalization stats do not match dataset dimension");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    float* row = ds.features.row_ptr(i);
    for (std::size_t j = 0; j < ds.input_dim(); ++j)
      row[j] = (row[j] - stats.mean[j]) / stats.std[j];
  }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img = open_input(images_path);
  const std::uint32_t img_magic = read_be32(img, images_path);
  if (img_magic != kIdxImagesMagic)
    throw std::runtime_error("bad IDX images magic at offset 0 in " + images_path);
  const std::uint32_t count = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);

  std::ifstream lab = open_input(labels_path);
  const std::uint32_t lab_magic = read_be32(lab, labels_path);
  if (lab_magic != kIdxLabelsMagic)
    throw std::runtime_error("bad IDX labels magic at offset 0 in " + labels_path);
  const std::uint32_t lab_count = read_be32(lab, labels_path);
  if (lab_count != count)
    throw std::runtime_error("IDX image/label counts differ: " + std::to_string(count) + " vs " +
                             std::to_string(lab_count));

  Dataset ds;
  ds.name = "idx";
  ds.geometry = {rows, cols, 1};
  const std::size_t dim = std::size_t(rows) * cols;
  ds.features = Mat<float>(count, dim);
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!img)
      throw std::runtime_error("truncated IDX images at offset " +
                               std::to_string(16 + std::size_t(i) * dim) + " in " + images_path);
    float* row = ds.features.row_ptr(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(buf[j]) / 255.0f;
  }
  ds.labels.resize(count);
  std::vector<unsigned char> lbuf(count);
  lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(count));
  if (!lab) throw std::runtime_error("truncated IDX labels in " + labels_path);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.labels[i] = lbuf[i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
  const auto& g = ds.geometry;
  if (g.channels != 1 || g.dim() != ds.input_dim())
    throw std::invalid_argument("write_idx: dataset must have single-channel geometry");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write file: " + images_path);
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(g.height));
  write_be32(img, static_cast<std::uint32_t>(g.width));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const float* row = ds.features.row_ptr(i);
    for (std::size_t j = 0; j < ds.input_dim(); ++j) {
      const float clamped = std::clamp(row[j], 0.0f, 1.0f);
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0f))));
    }
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot write file: " + labels_path);
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset load_cifar_binary(const std::vector<std::string>& paths) {
  Dataset ds;
  ds.name = "cifar10";
  ds.geometry = {32, 32, 3};
  ds.class_count = 10;
  const std::size_t dim = ds.geometry.dim();

  std::size_t total = 0;
  for (const auto& path : paths) {
    const auto bytes = std::filesystem::file_size(path);
    if (bytes % kCifarRecordBytes != 0)
      throw std::runtime_error("CIFAR file length " + std::to_string(bytes) +
                               " not divisible by 3073: " + path);
    total += bytes / kCifarRecordBytes;
  }
  ds.features = Mat<float>(total, dim);
  ds.labels.resize(total);

  std::size_t row = 0;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (const auto& path : paths) {
    std::ifstream in = open_input(path);
    while (in.read(reinterpret_cast<char*>(rec.data()),
                   static_cast<std::streamsize>(kCifarRecordBytes))) {
      ds.labels[row] = rec[0];
      float* out = ds.features.row_ptr(row);
      for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(rec[1 + j]) / 255.0f;
      ++row;
    }
  }
  return ds;
}

Dataset synth_clusters(int classes, std::size_t dim, std::size_t per_class, double separation,
                       RngStream& rng) {
  if (!(separation >= 0)) throw std::invalid_argument("synth_clusters: separation must be >= 0");
  Dataset ds;
  ds.name = "synth";
  ds.class_count = classes;
  ds.features = Mat<float>(per_class * static_cast<std::size_t>(classes), dim);
  ds.labels.resize(ds.features.rows);

  std::vector<Vec<double>> centers;
  for (int c = 0; c < classes; ++c) {
    Vec<double> dir = randn<double>(rng, dim);
    const double nrm = norm(dir);
    for (auto& x : dir.data) x *= separation / nrm;
    centers.push_back(std::move(dir));
  }
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      float* out = ds.features.row_ptr(row);
      for (std::size_t j = 0; j < dim; ++j)
        out[j] = static_cast<float>(centers[c][j] + rng.normal());
      ds.labels[row] = c;
    }
  }
  return ds;
}

Mat<float> augment(const Mat<float>& batch, const ImageGeometry& geom, RngStream& rng,
                   const AugmentFlags& flags) {
  if (geom.dim() != batch.cols)
    throw std::invalid_argument("augment: batch width does not match image geometry");
  const std::size_t H = geom.height, W = geom.width, C = geom.channels;
  Mat<float> out = batch;
  for (std::size_t b = 0; b < batch.rows; ++b) {
    float* row = out.row_ptr(b);
    if (flags.hflip && rng.next_unit() < 0.5) {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W / 2; ++x)
            std::swap(row[(c * H + y) * W + x], row[(c * H + y) * W + (W - 1 - x)]);
    }
    if (flags.crop_pad > 0) {
      const std::size_t pad = flags.crop_pad;
      const std::size_t dy = static_cast<std::size_t>(rng.next_unit() * (2 * pad + 1));
      const std::size_t dx = static_cast<std::size_t>(rng.next_unit() * (2 * pad + 1));
      std::vector<float> cropped(geom.dim(), 0.0f);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            // source coordinate in the zero-padded image
            const long sy = static_cast<long>(y + dy) - static_cast<long>(pad);
            const long sx = static_cast<long>(x + dx) - static_cast<long>(pad);
            if (sy >= 0 && sy < static_cast<long>(H) && sx >= 0 && sx < static_cast<long>(W))
              cropped[(c * H + y) * W + x] = row[(c * H + sy) * W + sx];
          }
      std::copy(cropped.begin(), cropped.end(), row);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_examples,
                                                    const BatchPlan& plan, std::uint64_t epoch) {
  std::vector<std::size_t> order(num_examples);
  for (std::size_t i = 0; i < num_examples; ++i) order[i] = i;
  RngStream rng = RngStream(plan.shuffle_seed, 0xba7c4).derived({epoch});
  for (std::size_t i = num_examples; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < num_examples; start += plan.batch_size) {
    const std::size_t end = std::min(start + plan.batch_size, num_examples);
    if (plan.drop_last && end - start < plan.batch_size) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Mat<float> gather_rows(const Mat<float>& features, const std::vector<std::size_t>& idx) {
  Mat<float> out(idx.size(), features.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::memcpy(out.row_ptr(i), features.row_ptr(idx[i]), features.cols * sizeof(float));
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

namespace {

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

CsvWriter::CsvWriter(const std::string& path) : path_(path), out_(path) {
  if (!out_) throw std::runtime_error("cannot write metrics file: " + path);
  out_ << "run_id,seed,epoch,step,method,metric,layer,value\n";
}

void CsvWriter::write(const MetricRecord& rec) {
  out_ << csv_quote(rec.run_id) << ',' << rec.seed << ',' << rec.epoch << ',' << rec.step << ','
       << csv_quote(rec.method) << ',' << csv_quote(rec.metric) << ',';
  if (rec.layer >= 0) out_ << rec.layer;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", rec.value);
  out_ << ',' << buf << '\n';
  if (!out_) throw std::runtime_error("write failure on metrics file: " + path_);
}

void CsvWriter::flush() { out_.flush(); }

void write_metrics(const std::vector<MetricRecord>& records, const std::string& path) {
  CsvWriter writer(path);
  for (const auto& rec : records) writer.write(rec);
  writer.flush();
}

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_le32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

std::uint32_t read_le32(std::ifstream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return std::uint32_t(buf[0]) | (std::uint32_t(buf[1]) << 8) | (std::uint32_t(buf[2]) << 16) |
         (std::uint32_t(buf[3]) << 24);
}

}  // namespace

void save_checkpoint(const MlpParams<float>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  write_le32(out, kCheckpointVersion);
  write_le32(out, static_cast<std::uint32_t>(params.config.depth));
  for (std::size_t d : params.config.dims()) write_le32(out, static_cast<std::uint32_t>(d));
  write_le32(out, params.config.bias_enabled ? 1 : 0);
  for (const auto& w : params.weights)
    out.write(reinterpret_cast<const char*>(w.data.data()),
              static_cast<std::streamsize>(w.size() * sizeof(float)));
  for (const auto& b : params.biases)
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(b.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failure on checkpoint: " + path);
}

MlpParams<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const std::uint32_t version = read_le32(in, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t depth = read_le32(in, path);
  std::vector<std::uint32_t> dims(depth + 1);
  for (auto& d : dims) d = read_le32(in, path);
  const bool bias = read_le32(in, path) != 0;

  MlpConfig cfg;
  cfg.depth = depth;
  cfg.input_dim = dims.front();
  cfg.output_dim = dims.back();
  cfg.width = depth > 1 ? dims[1] : dims.back();
  cfg.bias_enabled = bias;

  MlpParams<float> params;
  params.config = cfg;
  for (std::uint32_t i = 0; i < depth; ++i) {
    Mat<float> w(dims[i + 1], dims[i]);
    in.read(reinterpret_cast<char*>(w.data.data()),
            static_cast<std::streamsize>(w.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint weights in " + path);
    params.weights.push_back(std::move(w));
  }
  if (bias) {
    for (std::uint32_t i = 0; i < depth; ++i) {
      Vec<float> b(dims[i + 1]);
      in.read(reinterpret_cast<char*>(b.data.data()),
              static_cast<std::streamsize>(b.size() * sizeof(float)));
      if (!in) throw std::runtime_error("truncated checkpoint biases in " + path);
      params.biases.push_back(std::move(b));
    }
  }
  return params;
}

}  // namespace gg
