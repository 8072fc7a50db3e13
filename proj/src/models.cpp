#include "freqshield/models.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "freqshield/error.hpp"

namespace freqshield {

namespace nn = torch::nn;
using torch::Tensor;

std::string_view to_string(Family f) {
  switch (f) {
    case Family::UNet: return "UNet";
    case Family::SegNet: return "SegNet";
    case Family::DenseNet: return "DenseNet";
    case Family::AutoencoderI: return "AutoencoderI";
    case Family::AutoencoderII: return "AutoencoderII";
  }
  return "unknown";
}

std::string_view to_string(Purpose p) { return p == Purpose::Segment ? "segment" : "reconstruct"; }

Family family_from_string(std::string_view name) {
  for (Family f : {Family::UNet, Family::SegNet, Family::DenseNet, Family::AutoencoderI, Family::AutoencoderII}) {
    if (name == to_string(f)) return f;
  }
  throw ParameterError("unknown architecture family '" + std::string(name) + "'");
}

namespace {

// Leaky so that no unit can die for good; plain ReLU collapsed the
// frequency-domain reconstructors to a constant output.
Tensor act(const Tensor& x) { return torch::leaky_relu(x, 0.01); }

nn::Conv2d conv3x3(int in, int out, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

struct DoubleConvImpl : nn::Module {
  nn::Conv2d a{nullptr}, b{nullptr};
  DoubleConvImpl(int in, int out) {
    a = register_module("a", conv3x3(in, out));
    b = register_module("b", conv3x3(out, out));
  }
  Tensor forward(const Tensor& x) { return act(b(act(a(x)))); }
};
TORCH_MODULE(DoubleConv);

// Each layer sees the concatenation of the block input and all previous
// layer outputs.
struct DenseBlockImpl : nn::Module {
  std::vector<nn::Conv2d> layers;
  int out_channels;
  DenseBlockImpl(int in, int growth, int count) : out_channels(in + growth * count) {
    for (int i = 0; i < count; ++i) {
      layers.push_back(register_module("layer" + std::to_string(i), conv3x3(in + i * growth, growth)));
    }
  }
  Tensor forward(const Tensor& x) {
    std::vector<Tensor> feats{x};
    for (auto& l : layers) feats.push_back(act(l(torch::cat(feats, 1))));
    return torch::cat(feats, 1);
  }
};
TORCH_MODULE(DenseBlock);

std::vector<int> level_widths(const ArchitectureSpec& s) {
  std::vector<int> w;
  for (int i = 0; i < s.depth; ++i) w.push_back(s.base_width << i);
  return w;
}


class UNetNet : public Network {
 public:
  explicit UNetNet(const ArchitectureSpec& s) {
    const auto w = level_widths(s);
    for (int i = 0; i < s.depth; ++i) {
      enc_.push_back(register_module("enc" + std::to_string(i), DoubleConv(i == 0 ? s.in_channels : w[i - 1], w[i])));
    }
    for (int i = s.depth - 2; i >= 0; --i) {
      up_.push_back(register_module("up" + std::to_string(i),
                                    nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w[i + 1], w[i], 2).stride(2))));
      dec_.push_back(register_module("dec" + std::to_string(i), DoubleConv(2 * w[i], w[i])));
    }
    head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], s.out_channels, 1)));
  }
  Tensor forward(const Tensor& x) override {
    std::vector<Tensor> skips;
    Tensor h = x;
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      if (i > 0) h = torch::max_pool2d(h, 2);
      h = enc_[i](h);
      skips.push_back(h);
    }
    for (std::size_t j = 0; j < up_.size(); ++j) {
      h = up_[j](h);
      h = dec_[j](torch::cat({h, skips[skips.size() - 2 - j]}, 1));
    }
    return head_(h);
  }

 private:
  std::vector<DoubleConv> enc_, dec_;
  std::vector<nn::ConvTranspose2d> up_;
  nn::Conv2d head_{nullptr};
};

// Encoder-decoder without feature skips; upsampling reuses max-pool indices.
class SegNetNet : public Network {
 public:
  explicit SegNetNet(const ArchitectureSpec& s) {
    const auto w = level_widths(s);
    for (int i = 0; i < s.depth; ++i) {
      enc_.push_back(register_module("enc" + std::to_string(i), DoubleConv(i == 0 ? s.in_channels : w[i - 1], w[i])));
    }
    for (int i = s.depth - 2; i >= 0; --i) {
      dec_.push_back(register_module("dec" + std::to_string(i), DoubleConv(w[i + 1], w[i])));
    }
    head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], s.out_channels, 1)));
  }
  Tensor forward(const Tensor& x) override {
    std::vector<Tensor> indices;
    std::vector<std::vector<int64_t>> sizes;
    Tensor h = x;
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      if (i > 0) {
        sizes.push_back(h.sizes().vec());
        auto [pooled, idx] = torch::max_pool2d_with_indices(h, 2);
        h = pooled;
        indices.push_back(idx);
      }
      h = enc_[i](h);
    }
    for (std::size_t j = 0; j < dec_.size(); ++j) {
      const std::size_t k = indices.size() - 1 - j;
      h = dec_[j](h);
      // Channel count after dec_[j] matches the level the indices came from.
      h = torch::max_unpool2d(h, indices[k], {sizes[k][2], sizes[k][3]});
    }
    return head_(h);
  }

 private:
  std::vector<DoubleConv> enc_, dec_;
  nn::Conv2d head_{nullptr};
};

// Dense blocks (3 layers, growth 8) at every scale plus UNet-style long skips.
class DenseNetNet : public Network {
 public:
  static constexpr int kGrowth = 8;
  static constexpr int kLayers = 3;

  explicit DenseNetNet(const ArchitectureSpec& s) {
    const auto w = level_widths(s);
    stem_ = register_module("stem", conv3x3(s.in_channels, w[0]));
    int channels = w[0];
    for (int i = 0; i < s.depth; ++i) {
      auto block = register_module("enc_block" + std::to_string(i), DenseBlock(channels, kGrowth, kLayers));
      enc_blocks_.push_back(block);
      enc_trans_.push_back(register_module("enc_trans" + std::to_string(i),
                                           nn::Conv2d(nn::Conv2dOptions(block->out_channels, w[i], 1))));
      channels = w[i];
    }
    for (int i = s.depth - 2; i >= 0; --i) {
      up_.push_back(register_module("up" + std::to_string(i),
                                    nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w[i + 1], w[i], 2).stride(2))));
      auto block = register_module("dec_block" + std::to_string(i), DenseBlock(2 * w[i], kGrowth, kLayers));
      dec_blocks_.push_back(block);
      dec_trans_.push_back(register_module("dec_trans" + std::to_string(i),
                                           nn::Conv2d(nn::Conv2dOptions(block->out_channels, w[i], 1))));
    }
    head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], s.out_channels, 1)));
  }
  Tensor forward(const Tensor& x) override {
    std::vector<Tensor> skips;
    Tensor h = act(stem_(x));
    for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
      if (i > 0) h = torch::max_pool2d(h, 2);
      h = act(enc_trans_[i](enc_blocks_[i](h)));
      skips.push_back(h);
    }
    for (std::size_t j = 0; j < up_.size(); ++j) {
      h = up_[j](h);
      h = torch::cat({h, skips[skips.size() - 2 - j]}, 1);
      h = act(dec_trans_[j](dec_blocks_[j](h)));
    }
    return head_(h);
  }

 private:
  nn::Conv2d stem_{nullptr};
  std::vector<DenseBlock> enc_blocks_, dec_blocks_;
  std::vector<nn::Conv2d> enc_trans_, dec_trans_;
  std::vector<nn::ConvTranspose2d> up_;
  nn::Conv2d head_{nullptr};
};

// Plain convolutional autoencoder: `down` strided convolutions after an
// input convolution, mirrored by transposed convolutions.
class AutoencoderNet : public Network {
 public:
  AutoencoderNet(const ArchitectureSpec& s, int width, int down) {
    layers_ = register_module("layers", nn::Sequential());
    if (down == 3) {
      layers_->push_back(conv3x3(s.in_channels, width));
      layers_->push_back(nn::ReLU());
      layers_->push_back(conv3x3(width, width, 2));
      layers_->push_back(nn::ReLU());
      layers_->push_back(conv3x3(width, width, 2));
      layers_->push_back(nn::ReLU());
      layers_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width, 2).stride(2)));
      layers_->push_back(nn::ReLU());
      layers_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width, 2).stride(2)));
      layers_->push_back(nn::ReLU());
      layers_->push_back(conv3x3(width, s.out_channels));
    } else {
      layers_->push_back(conv3x3(s.in_channels, width, 2));
      layers_->push_back(nn::ReLU());
      layers_->push_back(conv3x3(width, width, 2));
      layers_->push_back(nn::ReLU());
      layers_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, width, 2).stride(2)));
      layers_->push_back(nn::ReLU());
      layers_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, s.out_channels, 2).stride(2)));
    }
  }
  Tensor forward(const Tensor& x) override { return layers_->forward(x); }

 private:
  nn::Sequential layers_{nullptr};
};

void validate_spec(const ArchitectureSpec& spec, Purpose purpose) {
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ConfigurationError("channel counts must be >= 1");
  if (spec.depth < 2) throw ConfigurationError("depth must be >= 2");
  if (spec.base_width < 4) throw ConfigurationError("base_width must be >= 4");
  const bool autoencoder = spec.family == Family::AutoencoderI || spec.family == Family::AutoencoderII;
  if (purpose == Purpose::Segment) {
    if (autoencoder) throw ConfigurationError("autoencoder families are reconstruction-only");
    if (spec.out_channels < 2) {
      throw ConfigurationError("a segmenter needs out_channels = num_classes >= 2, got " +
                               std::to_string(spec.out_channels));
    }
  } else if (spec.out_channels != spec.in_channels) {
    throw ConfigurationError("a reconstructor needs out_channels == in_channels");
  }
}

}  // namespace

int required_divisor(const ArchitectureSpec& spec) {
  switch (spec.family) {
    case Family::AutoencoderI:
    case Family::AutoencoderII: return 4;
    default: return 1 << (spec.depth - 1);
  }
}

std::shared_ptr<Network> build_network(const ArchitectureSpec& spec, Purpose purpose, std::uint64_t seed) {
  validate_spec(spec, purpose);
  torch::manual_seed(seed);
  std::shared_ptr<Network> net;
  switch (spec.family) {
    case Family::UNet: net = std::make_shared<UNetNet>(spec); break;
    case Family::SegNet: net = std::make_shared<SegNetNet>(spec); break;
    case Family::DenseNet: net = std::make_shared<DenseNetNet>(spec); break;
    case Family::AutoencoderI: net = std::make_shared<AutoencoderNet>(spec, 2 * spec.base_width, 3); break;
    case Family::AutoencoderII: net = std::make_shared<AutoencoderNet>(spec, spec.base_width, 2); break;
  }
  return net;
}

std::int64_t parameter_count(Network& net) {
  std::int64_t n = 0;
  for (const auto& p : net.parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------- tensors

torch::Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) return torch::zeros({0, 1, 0, 0});
  const int H = images.front().height(), W = images.front().width();
  auto t = torch::empty({static_cast<int64_t>(images.size()), 1, H, W}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (const auto& img : images) {
    if (!img.same_shape(H, W)) throw ShapeError("images in a batch must share one shape");
    for (double v : img.values()) *dst++ = static_cast<float>(v);
  }
  return t;
}

torch::Tensor image_to_tensor(const Image& image) { return images_to_tensor(std::span<const Image>(&image, 1)); }

Image tensor_to_image(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  if (c.dim() == 4) c = c.reshape({c.size(2), c.size(3)});
  if (c.dim() != 2) throw ShapeError("expected a 2D tensor");
  Image img(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  std::memcpy(img.values().data(), c.data_ptr<double>(), img.size() * sizeof(double));
  return img;
}

torch::Tensor labels_to_tensor(std::span<const LabelMap> labels) {
  if (labels.empty()) return torch::zeros({0, 0, 0}, torch::kInt64);
  const int H = labels.front().height(), W = labels.front().width();
  auto t = torch::empty({static_cast<int64_t>(labels.size()), H, W}, torch::kInt64);
  int64_t* dst = t.data_ptr<int64_t>();
  for (const auto& l : labels) {
    if (!l.same_shape(H, W)) throw ShapeError("label maps in a batch must share one shape");
    for (int v : l.values()) *dst++ = v;
  }
  return t;
}

namespace {

void check_input(const ArchitectureSpec& spec, const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec.in_channels) {
    throw ShapeError("network expects N x " + std::to_string(spec.in_channels) + " x H x W input");
  }
  if (spec.input_height > 0 && (x.size(2) != spec.input_height || x.size(3) != spec.input_width)) {
    throw ShapeError("model was trained on " + std::to_string(spec.input_height) + "x" +
                     std::to_string(spec.input_width) + " inputs, got " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)));
  }
  const int d = required_divisor(spec);
  if (x.size(2) % d != 0 || x.size(3) % d != 0) {
    throw ShapeError(std::string(to_string(spec.family)) + " needs height and width divisible by " +
                     std::to_string(d) + ", got " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  }
}

constexpr int64_t kInferenceChunk = 32;

}  // namespace

// ---------------------------------------------------------------- models

SegmenterModel::SegmenterModel(ArchitectureSpec spec, std::shared_ptr<Network> net)
    : spec_(spec), net_(std::move(net)) {}

torch::Tensor SegmenterModel::logits(const torch::Tensor& x) const {
  check_input(spec_, x);
  return net_->forward(x);
}

torch::Tensor SegmenterModel::probabilities(const torch::Tensor& x) const {
  return torch::softmax(logits(x), 1);
}

std::vector<LabelMap> SegmenterModel::predict(std::span<const Image> images) const {
  torch::NoGradGuard no_grad;
  std::vector<LabelMap> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kInferenceChunk) {
    const std::size_t n = std::min<std::size_t>(kInferenceChunk, images.size() - start);
    auto arg = logits(images_to_tensor(images.subspan(start, n))).argmax(1).contiguous();
    const int H = static_cast<int>(arg.size(1)), W = static_cast<int>(arg.size(2));
    const int64_t* src = arg.data_ptr<int64_t>();
    for (std::size_t i = 0; i < n; ++i) {
      LabelMap m(H, W);
      for (int& v : m.values()) v = static_cast<int>(*src++);
      out.push_back(std::move(m));
    }
  }
  return out;
}

LabelMap SegmenterModel::predict(const Image& image) const {
  return predict(std::span<const Image>(&image, 1)).front();
}

ReconstructionModel::ReconstructionModel(ArchitectureSpec spec, std::shared_ptr<Network> net,
                                         RepresentationMode mode)
    : spec_(spec), net_(std::move(net)), mode_(mode) {}

std::vector<Image> ReconstructionModel::reconstruct(std::span<const Image> reps) const {
  torch::NoGradGuard no_grad;
  std::vector<Image> out;
  out.reserve(reps.size());
  for (std::size_t start = 0; start < reps.size(); start += kInferenceChunk) {
    const std::size_t n = std::min<std::size_t>(kInferenceChunk, reps.size() - start);
    auto x = images_to_tensor(reps.subspan(start, n));
    check_input(spec_, x);
    auto y = net_->forward(x);
    y = y.clamp(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) out.push_back(tensor_to_image(y[static_cast<int64_t>(i)][0]));
  }
  return out;
}

Image ReconstructionModel::reconstruct(const Image& rep) const {
  return reconstruct(std::span<const Image>(&rep, 1)).front();
}

AnyModel build_model(const ArchitectureSpec& spec, Purpose purpose, std::uint64_t seed) {
  auto net = build_network(spec, purpose, seed);
  if (purpose == Purpose::Segment) return SegmenterModel(spec, std::move(net));
  return ReconstructionModel(spec, std::move(net));
}

SegmenterModel build_segmenter(const ArchitectureSpec& spec, std::uint64_t seed) {
  return SegmenterModel(spec, build_network(spec, Purpose::Segment, seed));
}

ReconstructionModel build_reconstructor(const ArchitectureSpec& spec, RepresentationMode mode, std::uint64_t seed) {
  return ReconstructionModel(spec, build_network(spec, Purpose::Reconstruct, seed), mode);
}

// ---------------------------------------------------------------- loss

torch::Tensor segmentation_loss(const torch::Tensor& probs_in, const torch::Tensor& labels_in,
                                const torch::Tensor& class_weights) {
  auto probs = probs_in.dim() == 3 ? probs_in.unsqueeze(0) : probs_in;
  auto labels = labels_in.dim() == 2 ? labels_in.unsqueeze(0) : labels_in;
  if (probs.dim() != 4 || labels.dim() != 3 || probs.size(0) != labels.size(0) ||
      probs.size(2) != labels.size(1) || probs.size(3) != labels.size(2)) {
    throw ShapeError("segmentation_loss: probabilities and labels disagree in shape");
  }
  const int64_t C = probs.size(1);
  if (class_weights.dim() != 1 || class_weights.size(0) != C) {
    throw ConfigurationError("class weight vector has length " + std::to_string(class_weights.numel()) +
                             ", expected " + std::to_string(C));
  }
  labels = labels.to(torch::kInt64);
  auto onehot = torch::one_hot(labels, C).permute({0, 3, 1, 2}).to(probs.dtype());
  auto w = class_weights.to(probs.dtype()).index_select(0, labels.flatten()).view_as(labels);

  auto p_true = (probs * onehot).sum(1).clamp_min(kProbabilityFloor);
  auto logistic = -(w * torch::log(p_true)).mean({1, 2});

  auto inter = (probs * onehot).sum({2, 3});
  auto denom = (probs * probs).sum({2, 3}) + (onehot * onehot).sum({2, 3});
  auto dice = (2.0 * inter / (denom + kProbabilityFloor)).sum(1);
  return (logistic - dice).mean();
}

std::vector<double> inverse_frequency_weights(const Dataset& ds) {
  std::vector<double> counts(static_cast<std::size_t>(ds.num_classes), 0.0);
  double total = 0.0;
  for (const auto& s : ds.samples) {
    for (int l : s.label.values()) counts[static_cast<std::size_t>(l)] += 1.0;
    total += static_cast<double>(s.label.size());
  }
  std::vector<double> w(counts.size(), 1.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) w[c] = total / (static_cast<double>(counts.size()) * counts[c]);
  }
  return w;
}

// ---------------------------------------------------------------- training

namespace {

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0)) throw ConfigurationError("learning_rate must be > 0");
  if (cfg.epochs < 1) throw ConfigurationError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigurationError("batch_size must be >= 1");
  if (cfg.weight_decay < 0) throw ConfigurationError("weight_decay must be >= 0");
}

void require_data(const Dataset& train, const Dataset& val, const ArchitectureSpec& spec) {
  if (train.empty() || val.empty()) throw ConfigurationError("training and validation sets must be non-empty");
  const int d = required_divisor(spec);
  if (train.height() % d != 0 || train.width() % d != 0 || train.height() != val.height() ||
      train.width() != val.width()) {
    throw ShapeError("dataset shape " + std::to_string(train.height()) + "x" + std::to_string(train.width()) +
                     " is incompatible with the model (divisor " + std::to_string(d) + ")");
  }
}

// Generic epoch loop: `batch_loss` maps sample indices to a scalar loss.
template <typename BatchLoss>
LossHistory run_training(Network& net, std::size_t n_train, std::size_t n_val, const TrainConfig& cfg,
                         BatchLoss&& train_loss, BatchLoss&& val_loss) {
  torch::optim::Adam opt(net.parameters(),
                         torch::optim::AdamOptions(cfg.learning_rate).weight_decay(cfg.weight_decay));
  SplitMix64 rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  LossHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_with(order, rng);
    net.train();
    double sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += bs) {
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(std::min(n_train, start + bs)));
      opt.zero_grad();
      auto loss = train_loss(idx);
      const double v = loss.template item<double>();
      if (!std::isfinite(v)) throw TrainingError(epoch + 1, "non-finite training loss");
      loss.backward();
      opt.step();
      sum += v * static_cast<double>(idx.size());
    }
    history.train.push_back(sum / static_cast<double>(n_train));

    net.eval();
    torch::NoGradGuard no_grad;
    double vsum = 0.0;
    for (std::size_t start = 0; start < n_val; start += bs) {
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < std::min(n_val, start + bs); ++i) idx.push_back(i);
      vsum += val_loss(idx).template item<double>() * static_cast<double>(idx.size());
    }
    const double vl = vsum / static_cast<double>(n_val);
    if (!std::isfinite(vl)) throw TrainingError(epoch + 1, "non-finite validation loss");
    history.val.push_back(vl);
    if (cfg.on_epoch) cfg.on_epoch(epoch, history.train.back(), vl);
  }
  return history;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

SegmenterModel train_segmenter(SegmenterModel model, const Dataset& train, const Dataset& val,
                               const TrainConfig& cfg) {
  validate_train_config(cfg);
  require_data(train, val, model.architecture());
  if (train.num_classes != model.num_classes()) {
    throw ConfigurationError("model predicts " + std::to_string(model.num_classes()) + " classes but dataset has " +
                             std::to_string(train.num_classes));
  }
  const auto weights_vec = cfg.class_weights.empty() ? inverse_frequency_weights(train) : cfg.class_weights;
  if (weights_vec.size() != static_cast<std::size_t>(model.num_classes())) {
    throw ConfigurationError("class weight vector length must equal the class count");
  }
  const auto weights = torch::tensor(weights_vec, torch::kFloat32);
  model.bind_input_shape(train.height(), train.width());

  const auto train_x = train.images(), val_x = val.images();
  std::vector<LabelMap> train_y, val_y;
  for (const auto& s : train.samples) train_y.push_back(s.label);
  for (const auto& s : val.samples) val_y.push_back(s.label);

  auto make_loss = [&](const std::vector<Image>& xs, const std::vector<LabelMap>& ys) {
    return [&, xs_ptr = &xs, ys_ptr = &ys](const std::vector<std::size_t>& idx) {
      const auto bx = gather(*xs_ptr, idx);
      const auto by = gather(*ys_ptr, idx);
      return segmentation_loss(model.probabilities(images_to_tensor(bx)), labels_to_tensor(by), weights);
    };
  };
  auto train_loss = make_loss(train_x, train_y);
  auto val_loss = make_loss(val_x, val_y);
  model.history = run_training(model.network(), train.size(), val.size(), cfg, train_loss, val_loss);
  return model;
}

ReconstructionModel train_reconstructor(ReconstructionModel model, const Dataset& train, const Dataset& val,
                                        const TrainConfig& cfg, RepresentationMode mode) {
  validate_train_config(cfg);
  require_data(train, val, model.architecture());
  model.set_mode(mode);
  model.bind_input_shape(train.height(), train.width());
  auto to_reps = [mode](const Dataset& ds) {
    std::vector<Image> reps;
    reps.reserve(ds.size());
    for (const auto& s : ds.samples) reps.push_back(to_representation(s.image, mode));
    return reps;
  };
  const auto train_r = to_reps(train), val_r = to_reps(val);
  Network& net = model.network();

  auto make_loss = [&](const std::vector<Image>& reps) {
    return [&net, &model, r = &reps](const std::vector<std::size_t>& idx) {
      auto x = images_to_tensor(gather(*r, idx));
      check_input(model.architecture(), x);
      auto diff = x - net.forward(x);
      return torch::sqrt(diff.pow(2).sum({1, 2, 3}) + 1e-12).mean();
    };
  };
  auto train_loss = make_loss(train_r);
  auto val_loss = make_loss(val_r);
  model.history = run_training(net, train.size(), val.size(), cfg, train_loss, val_loss);
  return model;
}

// ---------------------------------------------------------------- storage

namespace {

constexpr const char* kMagic = "FSHD1";

void write_container(const std::filesystem::path& path, const ArchitectureSpec& spec, Purpose purpose,
                     RepresentationMode mode, Network& net) {
  nlohmann::json header;
  header["family"] = std::string(to_string(spec.family));
  header["in_channels"] = spec.in_channels;
  header["out_channels"] = spec.out_channels;
  header["base_width"] = spec.base_width;
  header["depth"] = spec.depth;
  header["input_height"] = spec.input_height;
  header["input_width"] = spec.input_width;
  header["purpose"] = std::string(to_string(purpose));
  header["mode"] = std::string(to_string(mode));
  nlohmann::json tensors = nlohmann::json::array();
  std::int64_t total = 0;
  for (const auto& item : net.named_parameters()) {
    tensors.push_back({{"name", item.key()}, {"shape", item.value().sizes().vec()}});
    total += item.value().numel();
  }
  header["tensors"] = tensors;
  header["float_count"] = total;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path.string() + "'");
  out << kMagic << '\n' << header.dump() << '\n';
  for (const auto& item : net.named_parameters()) {
    auto t = item.value().detach().to(torch::kFloat32).contiguous();
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
              static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(float))));
  }
  if (!out) throw IoError("failed writing model file '" + path.string() + "'");
}

}  // namespace

void save_model(const SegmenterModel& model, const std::filesystem::path& path) {
  write_container(path, model.architecture(), Purpose::Segment, RepresentationMode::Spatial, model.network());
}

void save_model(const ReconstructionModel& model, const std::filesystem::path& path) {
  write_container(path, model.architecture(), Purpose::Reconstruct, model.mode(), model.network());
}

AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file '" + path.string() + "'");
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw FormatError("'" + path.string() + "' is not a model container (missing FSHD1 header)");
  }
  if (!std::getline(in, header_line)) throw FormatError("'" + path.string() + "' is truncated (no header)");

  ArchitectureSpec spec;
  Purpose purpose;
  RepresentationMode mode;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
    spec.family = family_from_string(header.at("family").get<std::string>());
    spec.in_channels = header.at("in_channels").get<int>();
    spec.out_channels = header.at("out_channels").get<int>();
    spec.base_width = header.at("base_width").get<int>();
    spec.depth = header.at("depth").get<int>();
    spec.input_height = header.value("input_height", 0);
    spec.input_width = header.value("input_width", 0);
    purpose = header.at("purpose").get<std::string>() == "segment" ? Purpose::Segment : Purpose::Reconstruct;
    mode = representation_from_string(header.at("mode").get<std::string>());
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError("'" + path.string() + "' has a malformed header: " + e.what());
  }

  std::shared_ptr<Network> net;
  try {
    net = build_network(spec, purpose, 0);
  } catch (const Error& e) {
    throw FormatError("'" + path.string() + "' describes an invalid architecture: " + e.what());
  }
  auto params = net->named_parameters();
  const auto& listed = header.at("tensors");
  if (listed.size() != params.size()) throw FormatError("'" + path.string() + "' parameter list mismatch");

  torch::NoGradGuard no_grad;
  std::size_t i = 0;
  for (auto& item : params) {
    const auto& entry = listed[i++];
    if (entry.at("name").get<std::string>() != item.key() ||
        entry.at("shape").get<std::vector<int64_t>>() != item.value().sizes().vec()) {
      throw FormatError("'" + path.string() + "' parameter '" + item.key() + "' does not match the architecture");
    }
    auto buf = torch::empty(item.value().sizes(), torch::kFloat32);
    const auto bytes = static_cast<std::streamsize>(buf.numel() * static_cast<int64_t>(sizeof(float)));
    in.read(reinterpret_cast<char*>(buf.data_ptr<float>()), bytes);
    if (in.gcount() != bytes) throw FormatError("'" + path.string() + "' is truncated");
    item.value().copy_(buf);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path.string() + "' has trailing bytes");

  if (purpose == Purpose::Segment) return SegmenterModel(spec, std::move(net));
  return ReconstructionModel(spec, std::move(net), mode);
}

SegmenterModel load_segmenter(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (!std::holds_alternative<SegmenterModel>(m)) {
    throw ConfigurationError("'" + path.string() + "' holds a reconstruct model, expected segment");
  }
  return std::get<SegmenterModel>(std::move(m));
}

ReconstructionModel load_reconstructor(const std::filesystem::path& path) {
  auto m = load_model(path);
  if (!std::holds_alternative<ReconstructionModel>(m)) {
    throw ConfigurationError("'" + path.string() + "' holds a segment model, expected reconstruct");
  }
  return std::get<ReconstructionModel>(std::move(m));
}

void configure_threads(int n) {
  if (n <= 0) {
    if (const char* env = std::getenv("FREQSHIELD_THREADS")) n = std::atoi(env);
  }
  if (n > 0) torch::set_num_threads(n);
}

}  // namespace freqshield
