#include "CLI11.hpp"

#include "gmlearn/data.hpp"
#include "gmlearn/exact.hpp"
#include "gmlearn/grad.hpp"
#include "gmlearn/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace gmlearn;

namespace {

struct InferenceFlags {
    std::string method = "trw";
    int iters = 0;  // 0 = run to convergence
    double threshold = 1e-10;

    InferenceConfig to_config() const {
        InferenceConfig c;
        if (method == "trw")
            c.method = Method::Trw;
        else if (method == "meanfield")
            c.method = Method::MeanField;
        else
            throw CLI::ValidationError("--method must be trw or meanfield");
        c.truncated = iters > 0;
        c.iters = iters;
        c.threshold = threshold;
        return c;
    }
};

void add_inference_flags(CLI::App* cmd, InferenceFlags& f) {
    cmd->add_option("--method", f.method, "Inference method: trw or meanfield");
    cmd->add_option("--iters", f.iters,
                    "Truncate inference at this many sweeps (0 = converge)");
    cmd->add_option("--threshold", f.threshold, "Convergence threshold");
}

Engine parse_engine(const std::string& s) {
    if (s == "backprop") return Engine::Backprop;
    if (s == "perturbation") return Engine::Perturbation;
    if (s == "implicit") return Engine::Implicit;
    throw CLI::ValidationError("--engine must be backprop, perturbation or implicit");
}

void write_history(const std::string& path, const std::vector<HistoryRow>& hist) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "iter,risk,grad_norm,seconds,inference_calls\n";
    f.precision(17);
    for (const auto& h : hist)
        f << h.iter << ',' << h.risk << ',' << h.grad_norm << ',' << h.seconds << ','
          << h.inference_calls << '\n';
}

int cmd_gen_chain(int n, int shift, int samples, std::uint64_t seed, int sweeps,
                  const std::string& out) {
    ChainGenConfig cfg;
    cfg.n = n;
    cfg.shift = shift;
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.gibbs_sweeps = sweeps;
    ChainData cd = gen_chain_model(cfg);
    fs::create_directories(out);
    save_model_json(out + "/source_model.json", cd.model);
    Dataset data = chain_to_dataset(n, cd.samples);
    save_dataset(out, data, "chain", 1, n, seed);
    std::cout << "wrote " << data.instances.size() << " instances to " << out << "\n";
    return 0;
}

int cmd_gen_denoise(double noise, int train, int test, const std::string& size,
                    std::uint64_t seed, const std::string& out) {
    DenoiseConfig cfg;
    cfg.noise = noise;
    cfg.train = train;
    cfg.test = test;
    cfg.seed = seed;
    auto x = size.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--size must look like 32x32");
    cfg.rows = std::stoi(size.substr(0, x));
    cfg.cols = std::stoi(size.substr(x + 1));
    DenoisePair pair = gen_denoise(cfg);
    fs::create_directories(out + "/train");
    fs::create_directories(out + "/test");
    save_dataset(out + "/train", pair.train, "grid", cfg.rows, cfg.cols, seed);
    save_dataset(out + "/test", pair.test, "grid", cfg.rows, cfg.cols, seed);
    std::cout << "wrote " << train << " train / " << test << " test instances to "
              << out << "\n";
    return 0;
}

TrainConfig make_train_config(const std::string& loss, const std::string& engine,
                              const InferenceFlags& inf, double lambda, int opt_iters,
                              bool exact_tree, int workers) {
    TrainConfig cfg;
    cfg.loss = parse_loss_spec(loss);
    cfg.engine = parse_engine(engine);
    cfg.inference = inf.to_config();
    cfg.lambda = lambda;
    cfg.max_iters = opt_iters;
    cfg.exact_tree = exact_tree;
    cfg.workers = workers;
    if (is_marginal_loss(cfg.loss.kind) && cfg.engine == Engine::Backprop &&
        !cfg.inference.truncated)
        throw CLI::ValidationError("--engine backprop needs --iters > 0");
    return cfg;
}

int cmd_train(const std::string& data_dir, const TrainConfig& cfg,
              const std::string& init, const std::string& out,
              const std::string& history) {
    Dataset data = load_dataset(data_dir);
    FeatureModel fm0 = FeatureModel::zeros(data.labels, data.du, data.dv);
    if (init == "independent") {
        TrainConfig pre = cfg;
        pre.loss = parse_loss_spec("univ_logistic");
        pre.engine = Engine::Backprop;
        pre.inference.truncated = true;
        pre.inference.iters = std::max(1, cfg.inference.iters);
        pre.exact_tree = false;
        pre.freeze_edges = true;
        fm0 = train(fm0, data, pre).fm;
    } else if (init != "zero") {
        fm0 = load_checkpoint(init);
    }
    TrainResult res = train(fm0, data, cfg);
    save_checkpoint(out, res.fm, cfg, static_cast<int>(res.history.size()) - 1,
                    res.history.back().risk);
    if (!history.empty()) write_history(history, res.history);
    std::cout << "final risk " << res.history.back().risk << " after "
              << res.history.size() - 1 << " iterations"
              << (res.converged ? " (converged)" : "")
              << (res.diverged ? " (diverged)" : "") << "\n";
    if (!res.message.empty()) std::cerr << "note: " << res.message << "\n";
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& checkpoint,
             const TrainConfig& cfg, const std::string& split,
             const std::string& out) {
    Dataset data = load_dataset(data_dir);
    FeatureModel fm = load_checkpoint(checkpoint);
    EvalResult res = evaluate(fm, data, cfg);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f.precision(17);
    f << "split,loss_value,hamming_error,n_instances\n";
    f << split << ',' << res.loss_value << ',' << res.hamming_error << ','
      << res.n_instances << '\n';
    std::cout << split << ": loss " << res.loss_value << ", error "
              << res.hamming_error << " on " << res.n_instances << " instances\n";
    return 0;
}

int cmd_infer(const std::string& model_path, const InferenceFlags& inf,
              const std::string& out) {
    Model m = load_model_json(model_path);
    InferenceConfig cfg = inf.to_config();
    TableVec mu = cfg.method == Method::MeanField
                      ? mean_field(m.graph, m.theta, cfg).mu
                      : trw(m.graph, m.theta, cfg).mu;
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f.precision(17);
    f << "kind,index,label_i,label_j,value\n";
    for (int i = 0; i < m.graph.node_count(); ++i)
        for (int x = 0; x < m.graph.labels(i); ++x)
            f << "node," << i << ',' << x << ",," << mu.u(i, x) << '\n';
    for (int e = 0; e < m.graph.edge_count(); ++e) {
        const auto& [a, b] = m.graph.edge(e);
        for (int xa = 0; xa < m.graph.labels(a); ++xa)
            for (int xb = 0; xb < m.graph.labels(b); ++xb)
                f << "edge," << e << ',' << xa << ',' << xb << ',' << mu.e(e, xa, xb)
                  << '\n';
    }
    std::cout << "wrote marginals to " << out << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int grid, double s, const std::string& loss_name_arg,
                  const std::string& method, int iters) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unary(0.0, 1.0), pair(0.0, s);
    Graph g = Graph::grid(grid, grid, 2);
    TableVec theta(g);
    for (int i = 0; i < g.node_count(); ++i)
        for (int x = 0; x < 2; ++x) theta.u(i, x) = unary(rng);
    for (int e = 0; e < g.edge_count(); ++e)
        for (auto& v : theta.edge(e)) v = pair(rng);
    Labeling target(g.node_count());
    for (int& v : target) v = rng() & 1;

    LossSpec loss = parse_loss_spec(loss_name_arg);
    InferenceFlags inf;
    inf.method = method;
    InferenceConfig converged = inf.to_config();
    InferenceConfig truncated = converged;
    truncated.truncated = true;
    truncated.iters = iters;

    auto pipeline_value = [&](const TableVec& th, const InferenceConfig& cfg) {
        TableVec mu = cfg.method == Method::MeanField ? mean_field(g, th, cfg).mu
                                                      : trw(g, th, cfg).mu;
        return eval_marginal_loss(loss, g, mu, target).value;
    };
    auto full_fd = [&](const InferenceConfig& cfg) {
        TableVec fd(g);
        const double h = 1e-5;
        TableVec th = theta;
        for (size_t k = 0; k < th.size(); ++k) {
            double orig = th.raw()[k];
            th.raw()[k] = orig + h;
            double fp = pipeline_value(th, cfg);
            th.raw()[k] = orig - h;
            double fmn = pipeline_value(th, cfg);
            th.raw()[k] = orig;
            fd.raw()[k] = (fp - fmn) / (2 * h);
        }
        return fd;
    };
    auto rel_err = [&](const TableVec& a, const TableVec& ref) {
        TableVec d = a;
        d.axpy(-1.0, ref);
        return d.inf_norm() / std::max(ref.inf_norm(), 1e-300);
    };

    std::cout << "engine,sides,multiplier,max_rel_err\n";
    std::cout.precision(6);
    {
        TableVec fd_trunc = full_fd(truncated);
        auto [value, gr] =
            marginal_loss_grad(g, theta, truncated, loss, target, Engine::Backprop);
        (void)value;
        std::cout << "backprop,,," << rel_err(gr.dl_dtheta, fd_trunc) << "\n";
    }
    TableVec fd_conv = full_fd(converged);
    for (int sides : {1, 2, 4})
        for (double m : {0.1, 1.0, 10.0}) {
            PerturbationConfig pc{sides, m};
            auto [value, gr] = marginal_loss_grad(g, theta, converged, loss, target,
                                                  Engine::Perturbation, pc);
            (void)value;
            std::cout << "perturbation," << sides << ',' << m << ','
                      << rel_err(gr.dl_dtheta, fd_conv) << "\n";
        }
    if (converged.method == Method::Trw) {
        auto [value, gr] =
            marginal_loss_grad(g, theta, converged, loss, target, Engine::Implicit);
        (void)value;
        std::cout << "implicit,,," << rel_err(gr.dl_dtheta, fd_conv) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pairwise discrete graphical models: generation, training, "
                 "evaluation and gradient checking"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate synthetic datasets");
    gen->require_subcommand(1);
    int cn = 20, cshift = 0, csamples = 100, csweeps = 2000;
    std::uint64_t cseed = 0;
    std::string cout_dir = "chain_data";
    auto* genc = gen->add_subcommand("chain", "Hidden-chain ladder samples");
    genc->add_option("--n", cn);
    genc->add_option("--shift", cshift);
    genc->add_option("--samples", csamples);
    genc->add_option("--sweeps", csweeps);
    genc->add_option("--seed", cseed);
    genc->add_option("--out", cout_dir);

    double dnoise = 1.25;
    int dtrain = 8, dtest = 4;
    std::string dsize = "32x32", dout_dir = "denoise_data";
    std::uint64_t dseed = 0;
    auto* gend = gen->add_subcommand("denoise", "Binary denoising images");
    gend->add_option("--noise", dnoise);
    gend->add_option("--train", dtrain);
    gend->add_option("--test", dtest);
    gend->add_option("--size", dsize);
    gend->add_option("--seed", dseed);
    gend->add_option("--out", dout_dir);

    // shared train/eval options
    std::string t_data, t_loss = "univ_logistic", t_engine = "backprop";
    std::string t_init = "zero", t_out = "checkpoint.json", t_history = "history.csv";
    InferenceFlags t_inf;
    double t_lambda = 0;
    int t_opt_iters = 100, t_workers = 1;
    bool t_exact_tree = false;
    auto* tr = app.add_subcommand("train", "Fit a conditional model");
    tr->add_option("--data", t_data)->required();
    tr->add_option("--loss", t_loss);
    tr->add_option("--engine", t_engine);
    tr->add_option("--lambda", t_lambda);
    tr->add_option("--opt-iters", t_opt_iters);
    tr->add_option("--init", t_init, "zero, independent, or a checkpoint path");
    tr->add_option("--out", t_out);
    tr->add_option("--history", t_history);
    tr->add_option("--workers", t_workers);
    tr->add_flag("--exact-tree", t_exact_tree);
    add_inference_flags(tr, t_inf);

    std::string e_data, e_checkpoint, e_split = "test", e_out = "metrics.csv";
    std::string e_loss = "univ_logistic";
    InferenceFlags e_inf;
    bool e_exact_tree = false;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--data", e_data)->required();
    ev->add_option("--checkpoint", e_checkpoint)->required();
    ev->add_option("--loss", e_loss);
    ev->add_option("--split", e_split);
    ev->add_option("--out", e_out);
    ev->add_flag("--exact-tree", e_exact_tree);
    add_inference_flags(ev, e_inf);

    std::string i_model, i_out = "marginals.csv";
    InferenceFlags i_inf;
    auto* in = app.add_subcommand("infer", "Dump marginals for one model");
    in->add_option("--model", i_model)->required();
    in->add_option("--out", i_out);
    add_inference_flags(in, i_inf);

    std::uint64_t g_seed = 0;
    int g_grid = 10, g_iters = 5;
    double g_s = 1.0;
    std::string g_loss = "univ_logistic", g_method = "trw";
    auto* gc = app.add_subcommand("gradcheck", "Compare gradient engines");
    gc->add_option("--seed", g_seed);
    gc->add_option("--grid", g_grid);
    gc->add_option("--s", g_s, "Pairwise parameter standard deviation");
    gc->add_option("--loss", g_loss);
    gc->add_option("--method", g_method);
    gc->add_option("--iters", g_iters, "Sweeps for the truncated backprop check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (genc->parsed()) return cmd_gen_chain(cn, cshift, csamples, cseed, csweeps, cout_dir);
        if (gend->parsed())
            return cmd_gen_denoise(dnoise, dtrain, dtest, dsize, dseed, dout_dir);
        if (tr->parsed()) {
            TrainConfig cfg = make_train_config(t_loss, t_engine, t_inf, t_lambda,
                                                t_opt_iters, t_exact_tree, t_workers);
            return cmd_train(t_data, cfg, t_init, t_out, t_history);
        }
        if (ev->parsed()) {
            TrainConfig cfg = make_train_config(e_loss, "perturbation", e_inf, 0.0, 0,
                                                e_exact_tree, 1);
            return cmd_eval(e_data, e_checkpoint, cfg, e_split, e_out);
        }
        if (in->parsed()) return cmd_infer(i_model, i_inf, i_out);
        if (gc->parsed())
            return cmd_gradcheck(g_seed, g_grid, g_s, g_loss, g_method, g_iters);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
