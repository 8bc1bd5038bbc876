#pragma once

#include "hvcl/move_layer.hpp"
#include "hvcl/rng.hpp"
#include "hvcl/tensor.hpp"
#include "hvcl/variational.hpp"

#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace hvcl {

/// Plain deterministic dense layer (naive baseline).
struct DenseLayer {
    Tensor weight; // [in x out]
    Tensor bias;   // [out]

    DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng);
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    [[nodiscard]] std::vector<Tensor> parameters() const { return {weight, bias}; }
    [[nodiscard]] DenseLayer clone() const;
};

using Layer = std::variant<MoveLayer, VariationalDense, DenseLayer>;

enum class LayerKind { move, variational, dense };

std::string_view to_string(LayerKind kind);

struct Architecture {
    std::size_t input_dim = 784;
    std::vector<std::size_t> hidden{256, 256};
    std::size_t output_dim = 2;
    LayerKind kind = LayerKind::move;
    std::size_t experts = 2; // MoVE layers only
    std::size_t k = 1;
    VariationalInit init;
};

struct ModelOutput {
    Tensor logits;
    std::vector<AuxLossBundle> aux; // one per layer; dense layers report zeros
};

/// Stack of layers with leaky ReLU between them and a linear shared output head.
class Model {
public:
    Model(const Architecture& arch, Rng& rng);

    /// Training pass: sampled weights and auxiliary losses.
    [[nodiscard]] ModelOutput forward(const Tensor& x, Rng& rng, const ForwardOptions& options) const;
    /// Deterministic logits at the posterior means.
    [[nodiscard]] Tensor mean_logits(const Tensor& x) const;
    /// Argmax of mean_logits per row (ties to the lower class index).
    [[nodiscard]] std::vector<int> predict(const Tensor& x) const;

    /// Every prior becomes a copy of its posterior.
    void snapshot_priors();

    [[nodiscard]] std::vector<Tensor> parameters() const;
    [[nodiscard]] Model clone() const;

    [[nodiscard]] const Architecture& architecture() const { return arch_; }
    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Layer>& layers() { return layers_; }

private:
    Architecture arch_;
    std::vector<Layer> layers_;
};

/// -mean_i log softmax(logits)_i[label_i].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

} // namespace hvcl
