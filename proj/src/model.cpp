#include "hvcl/model.hpp"

#include "hvcl/error.hpp"

#include <cmath>
#include <string>

namespace hvcl {

DenseLayer::DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::vector<double> w(in_features * out_features);
    for (double& v : w) {
        v = rng.uniform(-bound, bound);
    }
    weight = Tensor::parameter({in_features, out_features}, std::move(w));
    bias = Tensor::zeros({out_features});
    bias.set_requires_grad(true);
}

Tensor DenseLayer::forward(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

DenseLayer DenseLayer::clone() const {
    DenseLayer copy = *this;
    copy.weight = weight.clone();
    copy.bias = bias.clone();
    return copy;
}

std::string_view to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::move: return "move";
    case LayerKind::variational: return "variational";
    case LayerKind::dense: return "dense";
    }
    return "move";
}

Model::Model(const Architecture& arch, Rng& rng) : arch_(arch) {
    if (arch.input_dim == 0 || arch.output_dim == 0) {
        throw DimensionError("Model: input and output widths must be positive");
    }
    std::vector<std::size_t> widths{arch.input_dim};
    widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
    widths.push_back(arch.output_dim);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l + 1] == 0) {
            throw DimensionError("Model: hidden widths must be positive");
        }
        switch (arch.kind) {
        case LayerKind::move:
            layers_.emplace_back(std::in_place_type<MoveLayer>, widths[l], widths[l + 1], rng,
                                 MoveLayerOptions{arch.experts, arch.k, arch.init, l});
            break;
        case LayerKind::variational:
            layers_.emplace_back(std::in_place_type<VariationalDense>, widths[l], widths[l + 1], rng, arch.init);
            break;
        case LayerKind::dense:
            layers_.emplace_back(std::in_place_type<DenseLayer>, widths[l], widths[l + 1], rng);
            break;
        }
    }
}

ModelOutput Model::forward(const Tensor& x, Rng& rng, const ForwardOptions& options) const {
    ModelOutput out;
    Tensor h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        AuxLossBundle aux;
        aux.weights = options.weights;
        Tensor y;
        if (const auto* move = std::get_if<MoveLayer>(&layers_[l])) {
            MoveOutput mo = move->forward(h, rng, options);
            y = mo.y;
            aux = std::move(mo.aux);
        } else if (const auto* var = std::get_if<VariationalDense>(&layers_[l])) {
            y = options.sample ? var->sample_forward(h, rng) : var->mean_forward(h);
            if (options.with_aux) {
                aux.weight_kl = var->kl_to_prior();
            }
            aux.expert_evaluations = h.rows();
            aux.routed = {h.rows()};
        } else {
            y = std::get<DenseLayer>(layers_[l]).forward(h);
        }
        if (!y.all_finite()) {
            throw NumericError("layer " + std::to_string(l) + ": non-finite activations");
        }
        out.aux.push_back(std::move(aux));
        h = l + 1 < layers_.size() ? ops::leaky_relu(y) : y;
    }
    out.logits = h;
    return out;
}

Tensor Model::mean_logits(const Tensor& x) const {
    Rng unused(0);
    ForwardOptions options;
    options.sample = false;
    options.with_aux = false;
    return forward(x, unused, options).logits;
}

std::vector<int> Model::predict(const Tensor& x) const {
    const Tensor logits = mean_logits(x);
    const std::size_t n = logits.rows();
    const std::size_t c = logits.cols();
    auto v = logits.values();
    std::vector<int> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (v[i * c + j] > v[i * c + best]) {
                best = j;
            }
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

void Model::snapshot_priors() {
    for (Layer& layer : layers_) {
        if (auto* move = std::get_if<MoveLayer>(&layer)) {
            move->snapshot_priors();
        } else if (auto* var = std::get_if<VariationalDense>(&layer)) {
            var->snapshot_prior();
        }
    }
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> params;
    for (const Layer& layer : layers_) {
        std::visit(
            [&](const auto& l) {
                for (const Tensor& p : l.parameters()) {
                    params.push_back(p);
                }
            },
            layer);
    }
    return params;
}

Model Model::clone() const {
    Model copy = *this;
    for (Layer& layer : copy.layers_) {
        std::visit([](auto& l) { l = l.clone(); }, layer);
    }
    return copy;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.rows() != labels.size()) {
        throw DimensionError("cross_entropy: " + logits.shape_string() + " logits for " +
                             std::to_string(labels.size()) + " labels");
    }
    std::vector<std::size_t> column(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols()) {
            throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) + " outside the head");
        }
        column[i] = static_cast<std::size_t>(labels[i]);
    }
    return ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), column)), -1.0);
}

} // namespace hvcl
