#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <torch/torch.h>

#include "freqshield/dataset.hpp"
#include "freqshield/frequency.hpp"

namespace freqshield {

enum class Family { UNet, SegNet, DenseNet, AutoencoderI, AutoencoderII };
enum class Purpose { Segment, Reconstruct };

std::string_view to_string(Family f);
std::string_view to_string(Purpose p);
Family family_from_string(std::string_view name);

struct ArchitectureSpec {
  Family family = Family::UNet;
  int in_channels = 1;
  int out_channels = 1;
  int base_width = 16;
  int depth = 4;
  // Spatial size the weights were trained for; 0 leaves it unconstrained.
  int input_height = 0;
  int input_width = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 8;
  double weight_decay = 1e-5;  // L2 penalty folded into the Adam gradient
  std::uint64_t seed = 0;
  // Per-class loss weights; inverse class frequency of the training set when empty.
  std::vector<double> class_weights;
  // Called after every epoch with (epoch, train loss, validation loss).
  std::function<void(int, double, double)> on_epoch;
};

struct LossHistory {
  std::vector<double> train;
  std::vector<double> val;
};

// A network maps N x in_channels x H x W to N x out_channels x H x W.
// Segmenters emit logits; reconstructors have a linear head and are clamped
// to [0,1] at inference.
class Network : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
};

// Spatial size the network needs to be divisible by.
int required_divisor(const ArchitectureSpec& spec);

std::shared_ptr<Network> build_network(const ArchitectureSpec& spec, Purpose purpose, std::uint64_t seed);

std::int64_t parameter_count(Network& net);

// N x 1 x H x W float tensor from images (all the same shape).
torch::Tensor images_to_tensor(std::span<const Image> images);
torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& t);  // accepts H x W or 1 x 1 x H x W
torch::Tensor labels_to_tensor(std::span<const LabelMap> labels);

class SegmenterModel {
 public:
  SegmenterModel() = default;
  SegmenterModel(ArchitectureSpec spec, std::shared_ptr<Network> net);

  const ArchitectureSpec& architecture() const noexcept { return spec_; }
  void bind_input_shape(int h, int w) noexcept { spec_.input_height = h; spec_.input_width = w; }
  int num_classes() const noexcept { return spec_.out_channels; }
  Network& network() const { return *net_; }
  std::shared_ptr<Network> network_ptr() const { return net_; }

  torch::Tensor logits(const torch::Tensor& x) const;
  torch::Tensor probabilities(const torch::Tensor& x) const;  // softmax over channels
  std::vector<LabelMap> predict(std::span<const Image> images) const;
  LabelMap predict(const Image& image) const;

  LossHistory history;

 private:
  ArchitectureSpec spec_;
  std::shared_ptr<Network> net_;
};

class ReconstructionModel {
 public:
  ReconstructionModel() = default;
  ReconstructionModel(ArchitectureSpec spec, std::shared_ptr<Network> net,
                      RepresentationMode mode = RepresentationMode::Spatial);

  const ArchitectureSpec& architecture() const noexcept { return spec_; }
  void bind_input_shape(int h, int w) noexcept { spec_.input_height = h; spec_.input_width = w; }
  RepresentationMode mode() const noexcept { return mode_; }
  void set_mode(RepresentationMode m) noexcept { mode_ = m; }
  Network& network() const { return *net_; }
  bool valid() const noexcept { return static_cast<bool>(net_); }

  // Applies the network to an already-converted representation.
  Image reconstruct(const Image& representation) const;
  std::vector<Image> reconstruct(std::span<const Image> representations) const;

  LossHistory history;

 private:
  ArchitectureSpec spec_;
  std::shared_ptr<Network> net_;
  RepresentationMode mode_ = RepresentationMode::Spatial;
};

using AnyModel = std::variant<SegmenterModel, ReconstructionModel>;

// Validates the spec against the purpose and initializes weights from seed.
AnyModel build_model(const ArchitectureSpec& spec, Purpose purpose, std::uint64_t seed);
SegmenterModel build_segmenter(const ArchitectureSpec& spec, std::uint64_t seed);
ReconstructionModel build_reconstructor(const ArchitectureSpec& spec, RepresentationMode mode,
                                        std::uint64_t seed);

// Weighted multi-class logistic loss (mean over pixels) minus the summed
// per-class Dice overlap, averaged over the batch.
//   probs:   N x C x H x W (or C x H x W)
//   labels:  N x H x W int64 (or H x W)
//   weights: C
torch::Tensor segmentation_loss(const torch::Tensor& probs, const torch::Tensor& labels,
                                const torch::Tensor& class_weights);

inline constexpr double kProbabilityFloor = 1e-7;

std::vector<double> inverse_frequency_weights(const Dataset& ds);

SegmenterModel train_segmenter(SegmenterModel model, const Dataset& train, const Dataset& val,
                               const TrainConfig& cfg);

// Minimizes the mean over samples of the unsquared 2-norm ||r - D(r)||_2,
// where r is the image in the given representation.
ReconstructionModel train_reconstructor(ReconstructionModel model, const Dataset& train,
                                        const Dataset& val, const TrainConfig& cfg,
                                        RepresentationMode mode);

// Model container: "FSHD1" magic line, one JSON header line, raw float32 weights.
void save_model(const SegmenterModel& model, const std::filesystem::path& path);
void save_model(const ReconstructionModel& model, const std::filesystem::path& path);
AnyModel load_model(const std::filesystem::path& path);
SegmenterModel load_segmenter(const std::filesystem::path& path);
ReconstructionModel load_reconstructor(const std::filesystem::path& path);

// Caps intra-op parallelism; reads FREQSHIELD_THREADS when n <= 0.
void configure_threads(int n = 0);

}  // namespace freqshield
