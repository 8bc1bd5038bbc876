#include "support.hpp"

#include "hvcl/data.hpp"
#include "hvcl/error.hpp"
#include "hvcl/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <type_traits>

using namespace hvcl;

namespace {

Architecture small_arch(std::size_t hidden = 8) {
    Architecture arch;
    arch.input_dim = 2;
    arch.hidden = {hidden};
    arch.output_dim = 2;
    return arch;
}

TrainConfig quick_config(Mode mode, std::size_t epochs = 3) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.epochs = epochs;
    cfg.batch_size = 64;
    cfg.learning_rate = 0.01;
    cfg.kl_scaling = KlScaling::per_dataset;
    return cfg;
}

std::vector<double> flat_parameters(const Model& model) {
    std::vector<double> out;
    for (const Tensor& p : model.parameters()) {
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return out;
}

double kl_sum(const Model& model) {
    double total = 0.0;
    for (const Layer& layer : model.layers()) {
        if (const auto* v = std::get_if<VariationalDense>(&layer)) {
            total += v->kl_to_prior().item();
        } else if (const auto* m = std::get_if<MoveLayer>(&layer)) {
            for (const auto& e : m->experts()) total += e.kl_to_prior().item();
        }
    }
    return total;
}

// Inputs carry no information about the balanced labels.
LabeledDataset noise_task(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset d;
    d.rows = rows;
    d.dim = 2;
    d.classes = 2;
    for (std::size_t i = 0; i < rows; ++i) {
        d.inputs.push_back(rng.normal());
        d.inputs.push_back(rng.normal());
        d.labels.push_back(static_cast<int>(i % 2));
    }
    return d;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("forgetting metrics") {
    AccuracyMatrix a;
    a.rows = {{0.9}, {0.5, 0.9}};
    auto m = forgetting_metrics(a);
    CHECK(m.acc == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(m.forgetting == doctest::Approx(0.4).epsilon(1e-15));

    AccuracyMatrix flat;
    flat.rows = {{0.8}, {0.8, 0.8}, {0.8, 0.8, 0.8}};
    auto f = forgetting_metrics(flat);
    CHECK(f.acc == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(f.forgetting == 0.0);

    AccuracyMatrix one;
    one.rows = {{0.6}};
    CHECK(forgetting_metrics(one).acc == 0.6);
    CHECK(forgetting_metrics(one).forgetting == 0.0);

    AccuracyMatrix broken;
    broken.rows = {{0.9}, {0.5}};
    CHECK_THROWS_AS(forgetting_metrics(broken), DimensionError);
    CHECK_THROWS_AS(forgetting_metrics(AccuracyMatrix{}), DimensionError);
}

TEST_CASE("ACC does not depend on task order in the final row") {
    AccuracyMatrix a;
    a.rows = {{0.9}, {0.7, 0.95}, {0.6, 0.8, 0.99}};
    AccuracyMatrix b = a;
    std::swap(b.rows[2][0], b.rows[2][2]);
    CHECK(forgetting_metrics(a).acc == doctest::Approx(forgetting_metrics(b).acc).epsilon(1e-15));
}

TEST_CASE("mode and scaling names") {
    for (Mode m : {Mode::hvcl, Mode::vcl_single_expert, Mode::naive_dense, Mode::offline_oracle}) {
        CHECK(mode_from_string(to_string(m)) == m);
    }
    CHECK(kl_scaling_from_string(to_string(KlScaling::per_dataset)) == KlScaling::per_dataset);
    CHECK_THROWS_AS(mode_from_string("ewc"), ConfigError);
    CHECK_THROWS_AS(kl_scaling_from_string("none"), ConfigError);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.betas.weight_kl = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.kernel_width = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.betas.entropy = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("default weights") {
    TrainConfig cfg;
    CHECK(cfg.betas.gating_kl == 0.002);
    CHECK(cfg.betas.weight_kl == 0.75);
    CHECK(cfg.betas.entropy == 0.01);
    CHECK(cfg.betas.diversity == 0.01);
    CHECK(cfg.learning_rate == 6e-4);
    cfg.mode = Mode::naive_dense;
    auto w = cfg.effective_weights();
    CHECK(w.gating_kl + w.weight_kl + w.entropy + w.diversity == 0.0);
    cfg.mode = Mode::vcl_single_expert;
    w = cfg.effective_weights();
    CHECK(w.weight_kl == 0.75);
    CHECK(w.gating_kl + w.entropy + w.diversity == 0.0);
}

TEST_CASE("Adam first step has magnitude lr") {
    Tensor p = Tensor::parameter({3}, {1.0, 1.0, 1.0});
    std::vector<double> g{0.5, -2.0, 1e3};
    std::copy(g.begin(), g.end(), p.grad_mut().begin());
    Adam adam(0.1);
    std::vector<Tensor> params{p};
    adam.step(params);
    CHECK(p.at(0) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p.at(1) == doctest::Approx(1.1).epsilon(1e-7));
    CHECK(p.at(2) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(adam.steps() == 1);
    adam.reset();
    CHECK(adam.steps() == 0);
}

TEST_CASE("deterministic loss reduces to cross-entropy") {
    Rng rng(1);
    Model model(architecture_for(small_arch(), Mode::naive_dense), rng);
    Tensor x = test::random_tensor({10, 2}, rng, 1.0, false);
    std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
    TrainConfig cfg;
    cfg.mode = Mode::naive_dense;
    auto loss = total_loss(model, x, y, cfg, rng);
    CHECK(loss.total.item() == cross_entropy(model.mean_logits(x), y).item());
    CHECK(loss.total.item() == loss.nll);
}

TEST_CASE("single-expert loss has the VCL form") {
    Rng rng(2);
    Model model(architecture_for(small_arch(), Mode::vcl_single_expert), rng);
    Tensor x = test::random_tensor({10, 2}, rng, 1.0, false);
    std::vector<int> y(10, 1);
    TrainConfig cfg;
    cfg.mode = Mode::vcl_single_expert;
    Rng a(5), b(5);
    auto loss = total_loss(model, x, y, cfg, a, 0.01);
    const double nll = cross_entropy(model.forward(x, b, {}).logits, y).item();
    CHECK(loss.nll == doctest::Approx(nll).epsilon(1e-14));
    CHECK(loss.total.item() == doctest::Approx(nll + 0.75 * 0.01 * kl_sum(model)).epsilon(1e-12));
    CHECK(loss.gating_kl == 0.0);
    CHECK(loss.entropy_cost == 0.0);
}

TEST_CASE("one MoVE expert with no diversity terms is the VCL loss") {
    Architecture arch = architecture_for(small_arch(), Mode::hvcl);
    arch.experts = 1;
    Rng rng(3);
    Model model(arch, rng);
    Tensor x = test::random_tensor({12, 2}, rng, 1.0, false);
    std::vector<int> y(12, 0);
    TrainConfig cfg;
    cfg.betas.entropy = 0.0;
    cfg.betas.diversity = 0.0;
    Rng a(9), b(9);
    auto loss = total_loss(model, x, y, cfg, a);
    const double nll = cross_entropy(model.forward(x, b, {}).logits, y).item();
    CHECK(loss.total.item() == doctest::Approx(nll + 0.75 * kl_sum(model)).epsilon(1e-12));
}

TEST_CASE("loss decreases on a separable task") {
    double first = 0.0, last = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TaskStream s = make_synthetic_stream(1, 256, 10.0, seed);
        const LabeledDataset& d = s.tasks[0].train;
        Rng rng(seed);
        Model model(small_arch(), rng);
        TrainConfig cfg;
        auto params = model.parameters();
        Adam adam(0.01);
        std::vector<std::size_t> all(d.rows);
        std::iota(all.begin(), all.end(), std::size_t{0});
        Tensor x = d.batch(all);
        Tape tape;
        for (int step = 0; step <= 50; ++step) {
            tape.clear();
            Tape::Scope scope(tape);
            Rng noise(1000 + step);
            auto loss = total_loss(model, x, d.labels, cfg, noise, 1.0 / d.rows);
            if (step == 0) first += loss.total.item();
            if (step == 50) {
                last += loss.total.item();
                break;
            }
            tape.backward(loss.total);
            adam.step(params);
            for (auto& p : params) p.zero_grad();
        }
    }
    CHECK(last < first);
}

TEST_CASE("zero epochs leave the model unchanged") {
    TaskStream s = make_synthetic_stream(1, 100, 10.0, 1);
    ContinualLearner learner(small_arch(), quick_config(Mode::hvcl, 0));
    const auto before = flat_parameters(learner.model());
    TrainingLog log = learner.train_task(s.tasks[0].train);
    CHECK(log.epochs.empty());
    CHECK(flat_parameters(learner.model()) == before);
}

TEST_CASE("training is bit-reproducible") {
    TaskStream s = make_synthetic_stream(2, 200, 10.0, 2);
    auto run = [&] {
        ContinualLearner learner(small_arch(), quick_config(Mode::hvcl));
        learner.train_task(s.tasks[0].train);
        learner.advance_task();
        learner.train_task(s.tasks[1].train);
        return flat_parameters(learner.model());
    };
    CHECK(run() == run());

    TrainConfig cfg = quick_config(Mode::hvcl, 2);
    const auto a = run_stream(s, small_arch(), cfg).matrix.rows;
    const auto b = run_stream(s, small_arch(), cfg).matrix.rows;
    CHECK(a == b);
}

TEST_CASE("training log contents") {
    TaskStream s = make_synthetic_stream(1, 300, 10.0, 3);
    ContinualLearner learner(small_arch(), quick_config(Mode::hvcl, 15));
    TrainingLog log = learner.train_task(s.tasks[0].train);
    REQUIRE(log.epochs.size() == 15);
    for (const auto& e : log.epochs) {
        CHECK(std::isfinite(e.loss));
        CHECK(e.weight_kl >= 0.0);
        CHECK(e.gating_kl >= 0.0);
        REQUIRE(e.expert_load.size() == 2);
        for (const auto& layer : e.expert_load) {
            CHECK(layer.size() == 2);
            CHECK(layer[0] + layer[1] == doctest::Approx(1.0));
        }
        CHECK(e.train_accuracy >= 0.0);
        CHECK(e.conditional_entropy <= e.marginal_entropy + 1e-12);
    }
    CHECK(log.epochs.back().train_accuracy > 0.9);
}

TEST_CASE("advance_task zeroes the KL terms and keeps predictions") {
    TaskStream s = make_synthetic_stream(1, 200, 10.0, 4);
    ContinualLearner learner(small_arch(), quick_config(Mode::hvcl, 2));
    learner.train_task(s.tasks[0].train);
    Tensor x = s.tasks[0].test.all_inputs();
    const Tensor before = learner.model().mean_logits(x);
    learner.advance_task();
    CHECK(learner.task_index() == 1);
    const Tensor after = learner.model().mean_logits(x);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before.at(i) == after.at(i));
    }
    Rng rng(5);
    auto loss = total_loss(learner.model(), x, s.tasks[0].test.labels, learner.config(), rng);
    CHECK(loss.gating_kl == 0.0);
    CHECK(loss.weight_kl == 0.0);
    const auto params = flat_parameters(learner.model());
    learner.advance_task();
    CHECK(flat_parameters(learner.model()) == params);
    auto again = total_loss(learner.model(), x, s.tasks[0].test.labels, learner.config(), rng);
    CHECK(again.weight_kl == 0.0);
}

TEST_CASE("evaluation") {
    ContinualLearner learner(small_arch(), quick_config(Mode::hvcl));
    LabeledDataset noise = noise_task(2000, 6);
    const double acc = accuracy(learner.model(), noise);
    CHECK(std::abs(acc - 0.5) <= 3.0 * std::sqrt(0.25 / 2000.0));
    CHECK(accuracy(learner.model(), noise, 3) == acc);
    CHECK_THROWS_AS(accuracy(learner.model(), LabeledDataset{}), DataError);

    TaskStream one = make_synthetic_stream(1, 100, 10.0, 7);
    auto result = run_stream(one, small_arch(), quick_config(Mode::hvcl, 1));
    REQUIRE(result.matrix.rows.size() == 1);
    CHECK(result.matrix.rows[0].size() == 1);
    CHECK_THROWS_AS((void)learner.evaluate_row(one, 1), DimensionError);
}

TEST_CASE("inference never sees a task identifier") {
    static_assert(std::is_invocable_r_v<std::vector<int>, decltype(&Model::predict), const Model&, const Tensor&>);
    static_assert(!std::is_invocable_v<decltype(&Model::predict), const Model&, const Tensor&, std::size_t>);
    static_assert(std::is_invocable_v<decltype(&accuracy), const Model&, const LabeledDataset&, std::size_t>);
}

TEST_CASE("offline oracle") {
    TaskStream one = make_synthetic_stream(1, 200, 10.0, 8);
    TrainConfig cfg = quick_config(Mode::naive_dense, 3);
    auto sequential = run_stream(one, small_arch(), cfg);
    auto oracle = offline_oracle_baseline(one, small_arch(), cfg);
    CHECK(oracle.matrix.rows == sequential.matrix.rows);

    TaskStream two = make_synthetic_stream(2, 200, 10.0, 9);
    auto a = offline_oracle_baseline(two, small_arch(), cfg);
    auto b = offline_oracle_baseline(two, small_arch(), cfg);
    CHECK(a.matrix.rows == b.matrix.rows);
    CHECK(a.matrix.rows.size() == 2);
    cfg.mode = Mode::offline_oracle;
    CHECK(run_stream(two, small_arch(), cfg).matrix.rows == a.matrix.rows);
}

TEST_CASE("very large KL weights freeze the model after the first task") {
    TaskStream s = make_synthetic_stream(2, 400, 10.0, 10);
    TrainConfig cfg = quick_config(Mode::hvcl, 5);
    ContinualLearner learner(small_arch(16), cfg);
    learner.train_task(s.tasks[0].train);
    learner.advance_task();
    const double task1 = accuracy(learner.model(), s.tasks[0].test);

    TrainConfig rigid = cfg;
    rigid.betas.gating_kl = 1e6;
    rigid.betas.weight_kl = 1e6;
    rigid.kl_scaling = KlScaling::per_batch;
    ContinualLearner frozen(small_arch(16), rigid);
    frozen.model() = learner.model().clone();
    TrainingLog log = frozen.train_task(s.tasks[1].train);
    ContinualLearner loose(small_arch(16), cfg);
    loose.model() = learner.model().clone();
    TrainingLog free_log = loose.train_task(s.tasks[1].train);
    CHECK(log.epochs.back().weight_kl < free_log.epochs.back().weight_kl);
    CHECK(log.epochs.back().gating_kl <= free_log.epochs.back().gating_kl);
    CHECK(task1 - accuracy(frozen.model(), s.tasks[0].test) <= 0.01);
}

}
