#include "hvcl/checkpoint.hpp"

#include "hvcl/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hvcl {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'V', 'C', 'L', 'C', 'K', 'P', 'T'};

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    template <typename T>
    void pod(T v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void u64(std::uint64_t v) { pod(v); }
    void text(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void reals(std::span<const double> v) {
        u64(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    void tensor(const Tensor& t) {
        u64(t.rank());
        for (std::size_t d : t.shape()) {
            u64(d);
        }
        reals(t.values());
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

    template <typename T>
    T pod() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        check();
        return v;
    }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    std::string text() {
        std::string s(bounded(u64()), '\0');
        in_.read(s.data(), static_cast<std::streamsize>(s.size()));
        check();
        return s;
    }
    std::vector<double> reals() {
        std::vector<double> v(bounded(u64()));
        in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        check();
        return v;
    }
    /// Reads a tensor and copies it into `into`, whose shape must match.
    void tensor_into(Tensor& into, const char* what) {
        const std::uint64_t rank = u64();
        Shape shape;
        for (std::uint64_t i = 0; i < rank && i < 3; ++i) {
            shape.push_back(u64());
        }
        std::vector<double> data = reals();
        if (rank != shape.size() || shape != into.shape() || data.size() != into.size()) {
            std::string found = "[";
            for (std::size_t i = 0; i < shape.size(); ++i) {
                found += (i ? "x" : "") + std::to_string(shape[i]);
            }
            throw CheckpointError(path_ + ": " + what + " has shape " + found + "], model expects " +
                                  into.shape_string());
        }
        std::copy(data.begin(), data.end(), into.values_mut().begin());
    }

private:
    std::size_t bounded(std::uint64_t n) {
        if (n > (std::uint64_t{1} << 32)) {
            throw CheckpointError(path_ + ": corrupt length field");
        }
        return static_cast<std::size_t>(n);
    }
    void check() {
        if (!in_) {
            throw CheckpointError(path_ + ": truncated checkpoint");
        }
    }

    std::ifstream& in_;
    std::string path_;
};

enum class Tag : std::uint8_t { move = 1, variational = 2, dense = 3 };

void write_field(Writer& w, const GaussianMeanField& g) {
    w.tensor(g.mu);
    w.tensor(g.rho);
}

void write_variational(Writer& w, const VariationalDense& v) {
    write_field(w, v.posterior());
    write_field(w, v.prior());
    w.tensor(v.bias());
}

void read_variational(Reader& r, VariationalDense& v) {
    GaussianMeanField post{v.posterior().mu.clone(), v.posterior().rho.clone()};
    GaussianMeanField prior = v.prior().frozen_copy();
    Tensor bias = v.bias().clone();
    r.tensor_into(post.mu, "posterior mean");
    r.tensor_into(post.rho, "posterior rho");
    r.tensor_into(prior.mu, "prior mean");
    r.tensor_into(prior.rho, "prior rho");
    r.tensor_into(bias, "bias");
    v.assign(std::move(post), std::move(prior), std::move(bias));
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot write checkpoint " + path.string());
    }
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod(kCheckpointVersion);
    w.text(ckpt.config_text);
    w.u64(ckpt.seed);
    w.u64(ckpt.tasks_trained);

    const Architecture& arch = ckpt.model.architecture();
    w.u64(arch.input_dim);
    w.u64(arch.output_dim);
    w.pod(static_cast<std::uint8_t>(arch.kind));
    w.u64(arch.experts);
    w.u64(arch.k);
    w.pod(arch.init.init_std);
    w.pod(arch.init.prior_std);
    w.u64(arch.hidden.size());
    for (std::size_t h : arch.hidden) {
        w.u64(h);
    }

    w.u64(ckpt.model.layers().size());
    for (const Layer& layer : ckpt.model.layers()) {
        if (const auto* move = std::get_if<MoveLayer>(&layer)) {
            w.pod(Tag::move);
            w.tensor(move->gating().weight);
            w.tensor(move->gating().bias);
            w.tensor(move->gating().prior_weight);
            w.tensor(move->gating().prior_bias);
            w.u64(move->num_experts());
            for (const auto& e : move->experts()) {
                write_variational(w, e);
            }
        } else if (const auto* var = std::get_if<VariationalDense>(&layer)) {
            w.pod(Tag::variational);
            write_variational(w, *var);
        } else {
            const auto& dense = std::get<DenseLayer>(layer);
            w.pod(Tag::dense);
            w.tensor(dense.weight);
            w.tensor(dense.bias);
        }
    }
    w.reals(ckpt.final_row);
    if (!out) {
        throw CheckpointError("failed writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("checkpoint not found: " + path.string());
    }
    Reader r(in, path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw CheckpointError(path.string() + ": not a checkpoint file");
    }
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError(path.string() + ": checkpoint format version " + std::to_string(version) +
                              ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    std::string config_text = r.text();
    const std::uint64_t seed = r.u64();
    const std::uint64_t tasks = r.u64();

    Architecture arch;
    arch.input_dim = r.u64();
    arch.output_dim = r.u64();
    const auto kind = r.pod<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(LayerKind::dense)) {
        throw CheckpointError(path.string() + ": unknown layer kind");
    }
    arch.kind = static_cast<LayerKind>(kind);
    arch.experts = r.u64();
    arch.k = r.u64();
    arch.init.init_std = r.pod<double>();
    arch.init.prior_std = r.pod<double>();
    arch.hidden.resize(r.u64());
    for (std::size_t& h : arch.hidden) {
        h = r.u64();
    }

    Rng scratch(0);
    Model model = [&] {
        try {
            return Model(arch, scratch);
        } catch (const Error& e) {
            throw CheckpointError(path.string() + ": invalid architecture: " + e.what());
        }
    }();
    if (r.u64() != model.layers().size()) {
        throw CheckpointError(path.string() + ": layer count does not match the architecture");
    }
    for (Layer& layer : model.layers()) {
        const auto tag = r.pod<Tag>();
        if (auto* move = std::get_if<MoveLayer>(&layer)) {
            if (tag != Tag::move) {
                throw CheckpointError(path.string() + ": layer order mismatch");
            }
            GatingNet& g = move->gating();
            r.tensor_into(g.weight, "gating weight");
            r.tensor_into(g.bias, "gating bias");
            r.tensor_into(g.prior_weight, "gating prior weight");
            r.tensor_into(g.prior_bias, "gating prior bias");
            if (r.u64() != move->num_experts()) {
                throw CheckpointError(path.string() + ": expert count mismatch");
            }
            for (auto& e : move->experts()) {
                read_variational(r, e);
            }
        } else if (auto* var = std::get_if<VariationalDense>(&layer)) {
            if (tag != Tag::variational) {
                throw CheckpointError(path.string() + ": layer order mismatch");
            }
            read_variational(r, *var);
        } else {
            if (tag != Tag::dense) {
                throw CheckpointError(path.string() + ": layer order mismatch");
            }
            auto& dense = std::get<DenseLayer>(layer);
            r.tensor_into(dense.weight, "dense weight");
            r.tensor_into(dense.bias, "dense bias");
        }
    }
    std::vector<double> row = r.reals();
    return Checkpoint{std::move(model), std::move(config_text), seed, static_cast<std::size_t>(tasks), std::move(row)};
}

} // namespace hvcl
