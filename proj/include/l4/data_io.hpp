#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "l4/numerics.hpp"

namespace l4 {

/// Labelled classification data. inputs is feature_dim x n (one column per sample).
struct Dataset {
  Matrix inputs;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_dim() const noexcept { return inputs.rows(); }

  /// Throws ContractError if labels are out of range or shapes disagree.
  void validate() const;
  /// First `n` samples (or all, if fewer).
  Dataset head(std::size_t n) const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses IDX images/labels from memory. Pixels are scaled by 1/255.
/// Throws ParseError naming the field and byte offset.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Reads and parses an MNIST-style IDX file pair.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Gaussian blobs: class c has a seeded unit-norm mean, samples add N(0, 0.3^2 I).
/// Labels are assigned round-robin (i % classes).
Dataset synthetic_classification(Seed seed, std::size_t n, std::size_t dim, std::size_t classes);

/// One CSV line of a run's trajectory.
struct MetricsRow {
  std::string run_id;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double batch_loss = 0.0;
  std::optional<double> effective_lr;  // empty for constant-stepsize optimizers
  std::optional<double> lmin;
  double wallclock_ms = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kMetricsHeader =
    "run_id,step,epoch,batch_loss,effective_lr,lmin,wallclock_ms";

std::string format_metrics(std::span<const MetricsRow> rows);
std::vector<MetricsRow> parse_metrics(const std::string& csv);

void write_metrics(std::span<const MetricsRow> rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

/// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace l4
