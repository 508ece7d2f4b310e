#include "phenoclust/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"
#include "phenoclust/error.hpp"
#include "phenoclust/text.hpp"

namespace phenoclust::ae {

double selu(double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); }

double selu_derivative(double x) { return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x); }

namespace {

// Kept strictly inside (0, 1) so reconstructions never saturate to 0 or 1.
double sigmoid(double x) {
    static const double lo = std::numeric_limits<double>::denorm_min();
    static const double hi = std::nextafter(1.0, 0.0);
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    return std::clamp(s, lo, hi);
}

Eigen::MatrixXd apply_layer(const DenseLayer& layer, const Eigen::MatrixXd& input, Eigen::MatrixXd* pre_out) {
    Eigen::MatrixXd pre = input * layer.weights.transpose();
    pre.rowwise() += layer.bias.transpose();
    Eigen::MatrixXd out = layer.activation == Activation::selu ? pre.unaryExpr(&selu) : pre.unaryExpr(&sigmoid);
    if (pre_out) *pre_out = std::move(pre);
    return out;
}

void check_width(const Eigen::MatrixXd& batch, std::size_t expected) {
    if (static_cast<std::size_t>(batch.cols()) != expected)
        throw Error(Errc::shape, "batch width " + std::to_string(batch.cols()) + " does not match network width " +
                                     std::to_string(expected));
}

}  // namespace

void MlpNetwork::validate() const {
    if (sizes.size() != layers.size() + 1) throw Error(Errc::architecture, "layer count does not match sizes");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (static_cast<std::size_t>(L.weights.cols()) != sizes[l] ||
            static_cast<std::size_t>(L.weights.rows()) != sizes[l + 1] ||
            static_cast<std::size_t>(L.bias.size()) != sizes[l + 1])
            throw Error(Errc::architecture, "layer " + std::to_string(l) + " does not chain");
        if (!L.weights.allFinite() || !L.bias.allFinite())
            throw Error(Errc::numeric, "layer " + std::to_string(l) + " holds non-finite parameters");
    }
}

std::vector<std::size_t> default_layer_sizes(std::size_t input_width) {
    if (input_width < kLatentWidth) throw Error(Errc::architecture, "input narrower than the latent width");
    static constexpr std::array<double, 4> ratios = {24.0 / 28.0, 16.0 / 28.0, 8.0 / 28.0, 5.0 / 28.0};
    std::vector<std::size_t> encoder = {input_width};
    for (double r : ratios) {
        const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(input_width) * r));
        encoder.push_back(std::max(kLatentWidth, w));
    }
    encoder.push_back(kLatentWidth);
    std::vector<std::size_t> sizes = encoder;
    for (auto it = encoder.rbegin() + 1; it != encoder.rend(); ++it) sizes.push_back(*it);
    return sizes;
}

MlpNetwork init_mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
    if (sizes.size() < 3 || sizes.size() % 2 == 0)
        throw Error(Errc::architecture, "autoencoder needs an odd number of widths (symmetric chain)");
    if (sizes.front() != sizes.back()) throw Error(Errc::architecture, "reconstruction width must equal input width");
    if (sizes[sizes.size() / 2] != kLatentWidth) throw Error(Errc::architecture, "bottleneck width must be 3");
    for (auto s : sizes)
        if (s == 0) throw Error(Errc::architecture, "zero-width layer");

    MlpNetwork net;
    net.sizes = sizes;
    net.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        const auto fan_in = static_cast<Eigen::Index>(sizes[l]);
        const auto fan_out = static_cast<Eigen::Index>(sizes[l + 1]);
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r)
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = l + 2 == sizes.size() ? Activation::sigmoid : Activation::selu;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Eigen::MatrixXd forward(const MlpNetwork& net, const Eigen::MatrixXd& batch, ForwardCache* cache) {
    check_width(batch, net.input_width());
    if (cache) {
        cache->pre.assign(net.layers.size(), {});
        cache->activations.assign(1, batch);
        cache->generation = net.generation;
    }
    Eigen::MatrixXd a = batch;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        a = apply_layer(net.layers[l], a, cache ? &cache->pre[l] : nullptr);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

double bce_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw Error(Errc::shape, "prediction and target shapes differ");
    if (pred.size() == 0) throw Error(Errc::shape, "empty loss input");
    double total = 0.0;
    for (Eigen::Index c = 0; c < pred.cols(); ++c)
        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
            const double p = std::clamp(pred(r, c), kBceEpsilon, 1.0 - kBceEpsilon);
            const double t = target(r, c);
            total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        }
    return total / static_cast<double>(pred.size());
}

Gradients backward(const MlpNetwork& net, const Eigen::MatrixXd& batch, const ForwardCache& cache) {
    if (batch.rows() == 0) throw Error(Errc::contract, "gradient of an empty batch is undefined");
    check_width(batch, net.input_width());
    if (cache.generation != net.generation || cache.activations.size() != net.layers.size() + 1 ||
        cache.activations.front().rows() != batch.rows() || cache.activations.front() != batch)
        throw Error(Errc::contract, "stale forward cache: parameters or batch changed since forward()");

    const std::size_t L = net.layers.size();
    if (net.layers.back().activation != Activation::sigmoid)
        throw Error(Errc::architecture, "BCE backward needs a sigmoid reconstruction layer");
    const Eigen::MatrixXd& pred = cache.activations.back();
    const double scale = 1.0 / static_cast<double>(pred.size());

    // Sigmoid + BCE: dLoss/dpre = (p - t) / N, zero where the clamp is active.
    Eigen::MatrixXd delta(pred.rows(), pred.cols());
    for (Eigen::Index c = 0; c < pred.cols(); ++c)
        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
            const double p = pred(r, c);
            const bool clamped = p < kBceEpsilon || p > 1.0 - kBceEpsilon;
            delta(r, c) = clamped ? 0.0 : (p - batch(r, c)) * scale;
        }

    Gradients g;
    g.weights.resize(L);
    g.bias.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        g.weights[l] = delta.transpose() * cache.activations[l];
        g.bias[l] = delta.colwise().sum().transpose();
        if (l == 0) break;
        const Eigen::MatrixXd upstream = delta * net.layers[l].weights;
        if (net.layers[l - 1].activation == Activation::selu) {
            delta = upstream.cwiseProduct(cache.pre[l - 1].unaryExpr(&selu_derivative));
        } else {
            const Eigen::MatrixXd& s = cache.activations[l];
            delta = upstream.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
        }
    }
    return g;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::size_t t, const AdamConfig& cfg) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw Error(Errc::shape, "Adam buffers do not align with parameters");
    if (t == 0) throw Error(Errc::contract, "Adam step counter starts at 1");
    const double td = static_cast<double>(t);
    const double c1 = 1.0 - std::pow(cfg.beta1, td);
    const double c2 = 1.0 - std::pow(cfg.beta2, td);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

AdamState AdamState::for_network(const MlpNetwork& net, const AdamConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw Error(Errc::malformed_input, "learning rate must be positive");
    AdamState s;
    s.config = cfg;
    for (const auto& layer : net.layers) {
        s.m_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        s.v_weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        s.m_bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
        s.v_bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return s;
}

namespace {
template <typename Dense>
std::span<double> flat(Dense& x) {
    return {x.data(), static_cast<std::size_t>(x.size())};
}
template <typename Dense>
std::span<const double> flat_const(const Dense& x) {
    return {x.data(), static_cast<std::size_t>(x.size())};
}
}  // namespace

void adam_step(AdamState& state, MlpNetwork& net, const Gradients& grads) {
    if (grads.weights.size() != net.layers.size() || state.m_weights.size() != net.layers.size())
        throw Error(Errc::shape, "gradient/optimizer layer count mismatch");
    ++state.t;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        if (grads.weights[l].rows() != layer.weights.rows() || grads.weights[l].cols() != layer.weights.cols())
            throw Error(Errc::shape, "gradient shape mismatch at layer " + std::to_string(l));
        adam_update(flat(layer.weights), flat_const(grads.weights[l]), flat(state.m_weights[l]),
                    flat(state.v_weights[l]), state.t, state.config);
        adam_update(flat(layer.bias), flat_const(grads.bias[l]), flat(state.m_bias[l]), flat(state.v_bias[l]),
                    state.t, state.config);
    }
    ++net.generation;
}

TrainResult train(MlpNetwork net, const Eigen::MatrixXd& data, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw Error(Errc::malformed_input, "epochs must be >= 1");
    if (cfg.batch_size < 1) throw Error(Errc::malformed_input, "batch size must be >= 1");
    if (cfg.loss != "bce") throw Error(Errc::malformed_input, "unsupported loss '" + cfg.loss + "'");
    if (data.rows() == 0) throw Error(Errc::insufficient_data, "cannot train on an empty matrix");
    net.validate();
    check_width(data, net.input_width());

    AdamState opt = AdamState::for_network(net, cfg.adam);
    std::mt19937_64 rng(cfg.seed);
    const auto n = static_cast<std::size_t>(data.rows());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.loss_history.reserve(cfg.epochs);
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with raw engine output so the order does not depend on
        // the standard library's distribution implementations.
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd batch(static_cast<Eigen::Index>(len), data.cols());
            for (std::size_t r = 0; r < len; ++r) batch.row(static_cast<Eigen::Index>(r)) = data.row(order[start + r]);
            const Eigen::MatrixXd recon = forward(net, batch, &cache);
            epoch_loss += bce_loss(recon, batch) * static_cast<double>(len);
            adam_step(opt, net, backward(net, batch, cache));
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    net.validate();
    result.net = std::move(net);
    return result;
}

Eigen::MatrixXd encode(const MlpNetwork& net, const Eigen::MatrixXd& data) {
    check_width(data, net.input_width());
    Eigen::MatrixXd a = data;
    for (std::size_t l = 0; l < net.encoder_layers(); ++l) a = apply_layer(net.layers[l], a, nullptr);
    return a;
}

Eigen::MatrixXd decode(const MlpNetwork& net, const Eigen::MatrixXd& latent) {
    check_width(latent, net.sizes[net.encoder_layers()]);
    Eigen::MatrixXd a = latent;
    for (std::size_t l = net.encoder_layers(); l < net.layers.size(); ++l) a = apply_layer(net.layers[l], a, nullptr);
    return a;
}

namespace {
constexpr const char* kCheckpointFormat = "phenoclust-autoencoder";
constexpr int kCheckpointVersion = 1;
}  // namespace

std::string Checkpoint::to_json() const {
    nlohmann::ordered_json doc;
    doc["format"] = kCheckpointFormat;
    doc["version"] = kCheckpointVersion;
    doc["layer_sizes"] = net.sizes;
    doc["seed"] = net.seed;
    doc["train"] = {{"epochs", train.epochs},
                    {"batch_size", train.batch_size},
                    {"seed", train.seed},
                    {"loss", train.loss},
                    {"learning_rate", train.adam.learning_rate},
                    {"beta1", train.adam.beta1},
                    {"beta2", train.adam.beta2},
                    {"epsilon", train.adam.epsilon}};
    auto& layers = doc["layers"] = nlohmann::ordered_json::array();
    for (const auto& layer : net.layers) {
        // Row-major weights: out rows of `in` values each.
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
        layers.push_back({{"activation", layer.activation == Activation::selu ? "selu" : "sigmoid"},
                          {"weights", w},
                          {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
    }
    doc["loss_history"] = loss_history;
    return doc.dump() + "\n";
}

Checkpoint Checkpoint::from_json(const std::string& text_doc) {
    try {
        const auto doc = nlohmann::json::parse(text_doc);
        if (doc.at("format") != kCheckpointFormat) throw Error(Errc::malformed_input, "not an autoencoder checkpoint");
        if (doc.at("version") != kCheckpointVersion)
            throw Error(Errc::malformed_input, "unsupported checkpoint version " + doc.at("version").dump());
        Checkpoint ck;
        ck.net.sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
        ck.net.seed = doc.at("seed").get<std::uint64_t>();
        const auto& t = doc.at("train");
        ck.train.epochs = t.at("epochs").get<std::size_t>();
        ck.train.batch_size = t.at("batch_size").get<std::size_t>();
        ck.train.seed = t.at("seed").get<std::uint64_t>();
        ck.train.loss = t.at("loss").get<std::string>();
        ck.train.adam.learning_rate = t.at("learning_rate").get<double>();
        ck.train.adam.beta1 = t.at("beta1").get<double>();
        ck.train.adam.beta2 = t.at("beta2").get<double>();
        ck.train.adam.epsilon = t.at("epsilon").get<double>();
        const auto& layers = doc.at("layers");
        if (layers.size() + 1 != ck.net.sizes.size()) throw Error(Errc::architecture, "checkpoint layer count mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& j = layers[l];
            const auto in = static_cast<Eigen::Index>(ck.net.sizes[l]);
            const auto out = static_cast<Eigen::Index>(ck.net.sizes[l + 1]);
            const auto w = j.at("weights").get<std::vector<double>>();
            const auto b = j.at("bias").get<std::vector<double>>();
            if (w.size() != static_cast<std::size_t>(in * out) || b.size() != static_cast<std::size_t>(out))
                throw Error(Errc::architecture, "checkpoint layer " + std::to_string(l) + " has wrong size");
            DenseLayer layer;
            layer.weights.resize(out, in);
            for (Eigen::Index r = 0; r < out; ++r)
                for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
            layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
            const auto act = j.at("activation").get<std::string>();
            if (act != "selu" && act != "sigmoid") throw Error(Errc::malformed_input, "unknown activation " + act);
            layer.activation = act == "selu" ? Activation::selu : Activation::sigmoid;
            ck.net.layers.push_back(std::move(layer));
        }
        if (doc.contains("loss_history")) ck.loss_history = doc.at("loss_history").get<std::vector<double>>();
        ck.net.validate();
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::malformed_input, std::string("checkpoint: ") + e.what());
    }
}

void Checkpoint::save(const std::filesystem::path& path) const { text::write_file(path, to_json()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return from_json(text::read_file(path)); }

}  // namespace phenoclust::ae
