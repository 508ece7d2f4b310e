#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phenoclust::ae {

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr std::size_t kLatentWidth = 3;
inline constexpr std::size_t kEncoderDepth = 5;
inline constexpr double kBceEpsilon = 1e-7;

double selu(double x);
/// Derivative of selu with respect to its pre-activation input.
double selu_derivative(double x);

enum class Activation { selu, sigmoid };

/// Fully connected layer computing act(W x + b); W is out x in.
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Activation activation = Activation::selu;
};

struct MlpNetwork {
    std::vector<std::size_t> sizes;  // widths of every activation, input first
    std::vector<DenseLayer> layers;
    std::uint64_t seed = 0;
    /// Bumped on every parameter update; forward caches remember it.
    std::uint64_t generation = 0;

    std::size_t input_width() const { return sizes.front(); }
    std::size_t encoder_layers() const { return layers.size() / 2; }
    void validate() const;
};

/// [w, 24, 16, 8, 5, 3, 5, 8, 16, 24, w] for w = 28; hidden widths scale
/// with w (rounded, never below the latent width).
std::vector<std::size_t> default_layer_sizes(std::size_t input_width);

/// LeCun-normal weights (variance 1 / fan_in), zero biases. SELU on every
/// layer except the final reconstruction layer, which is sigmoid. Sizes must
/// be a symmetric chain through a 3-wide bottleneck.
MlpNetwork init_mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed);

struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre;          // per layer, rows = samples
    std::vector<Eigen::MatrixXd> activations;  // input first, then each layer output
    std::uint64_t generation = 0;
};

/// Reconstruction of `batch` (rows = samples); fills `cache` when given.
Eigen::MatrixXd forward(const MlpNetwork& net, const Eigen::MatrixXd& batch, ForwardCache* cache = nullptr);

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
double bce_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;
};

/// Exact gradient of bce_loss(forward(batch), batch) from a cache produced by
/// forward on the same batch and parameters.
Gradients backward(const MlpNetwork& net, const Eigen::MatrixXd& batch, const ForwardCache& cache);

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update of one flat parameter block at step t (t >= 1).
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::size_t t, const AdamConfig& cfg);

struct AdamState {
    AdamConfig config;
    std::size_t t = 0;
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_bias, v_bias;

    static AdamState for_network(const MlpNetwork& net, const AdamConfig& cfg = {});
};

void adam_step(AdamState& state, MlpNetwork& net, const Gradients& grads);

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    AdamConfig adam;
    std::string loss = "bce";
};

struct TrainResult {
    MlpNetwork net;
    std::vector<double> loss_history;  // one sample-weighted mean batch loss per epoch
};

/// Mini-batch Adam on shuffled batches; epochs * ceil(n / batch) steps.
/// Targets are the inputs themselves: nothing but the feature matrix is seen.
TrainResult train(MlpNetwork net, const Eigen::MatrixXd& data, const TrainConfig& cfg);

/// Encoder half: n x 3 post-SELU bottleneck activations.
Eigen::MatrixXd encode(const MlpNetwork& net, const Eigen::MatrixXd& data);
/// Decoder half applied to latent rows.
Eigen::MatrixXd decode(const MlpNetwork& net, const Eigen::MatrixXd& latent);

struct Checkpoint {
    MlpNetwork net;
    TrainConfig train;
    std::vector<double> loss_history;

    std::string to_json() const;
    static Checkpoint from_json(const std::string& doc);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace phenoclust::ae
