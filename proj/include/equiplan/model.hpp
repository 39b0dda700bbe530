#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "equiplan/scene.hpp"
#include "equiplan/tensor.hpp"

namespace equiplan {

struct ModelConfig {
    std::size_t channels = 64;   // rows of the equivariant feature (and route points)
    std::size_t hidden = 64;     // width of the invariant feature
    std::size_t relations = 4;   // relationship categories
    std::size_t modes = 6;       // parallel trajectory decoders
    std::size_t blocks = 4;      // feature update blocks
    std::size_t t_p = 4;
    std::size_t t_f = 6;

    void validate() const;
};

// Two-layer perceptron with tanh hidden activation. Used only for invariant
// quantities; maps that touch equivariant features are bias-free matrices.
struct Mlp {
    Tensor w1, b1, w2, b2;
};

struct BlockParams {
    Tensor ra;               // channels x channels, bias-free route attraction
    Mlp att;                 // hidden -> channels, sigmoid gate
    std::vector<Mlp> edge;   // relations x [(2 hidden + channels) -> channels]
    Tensor nl_q, nl_k;       // channels x channels, bias-free
    Mlp msg;                 // (2 hidden + channels) -> hidden
    Mlp upd;                 // 2 hidden -> hidden
};

struct ModelParams {
    ModelConfig cfg;
    Tensor init_g;                 // channels x t_p, bias-free
    Mlp init_h;                    // (2 t_p - 3) -> hidden
    Mlp rel;                       // (2 hidden + 1) -> relations
    std::vector<BlockParams> blocks;
    std::vector<Tensor> decoders;  // modes x [(t_f + 1) x channels], bias-free

    static ModelParams create(const ModelConfig& cfg, std::uint64_t seed);
    std::size_t param_count() const;
};

// Stable traversal of every trainable tensor, in creation order.
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
    auto mlp = [&fn](const std::string& name, auto& m) {
        fn(name + ".w1", m.w1);
        fn(name + ".b1", m.b1);
        fn(name + ".w2", m.w2);
        fn(name + ".b2", m.b2);
    };
    fn("init_g", p.init_g);
    mlp("init_h", p.init_h);
    mlp("rel", p.rel);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        const std::string b = "block" + std::to_string(l);
        auto& blk = p.blocks[l];
        fn(b + ".ra", blk.ra);
        mlp(b + ".att", blk.att);
        for (std::size_t q = 0; q < blk.edge.size(); ++q) {
            mlp(b + ".edge" + std::to_string(q), blk.edge[q]);
        }
        fn(b + ".nl_q", blk.nl_q);
        fn(b + ".nl_k", blk.nl_k);
        mlp(b + ".msg", blk.msg);
        mlp(b + ".upd", blk.upd);
    }
    for (std::size_t k = 0; k < p.decoders.size(); ++k) {
        fn("dec" + std::to_string(k), p.decoders[k]);
    }
}

struct ForwardOptions {
    bool route_attraction = true;  // Table-style "Route" switch
    bool equivariant_init = true;  // mean-centering in the equivariant init
};

// Value-level states (one tensor per vehicle).
struct EquivariantState {
    std::vector<Tensor> g;  // M of channels x 2, meters, absolute frame
};
struct InvariantState {
    std::vector<Tensor> h;  // M of hidden x 1
};
struct RelationTensor {
    std::size_t m = 0;
    std::vector<Tensor> c;  // m*m entries of relations x 1; diagonal unused
    const Tensor& at(std::size_t i, std::size_t j) const { return c[i * m + j]; }
};

// Per-vehicle motion profile feeding the invariant init: step speeds
// (t_p - 1 values, meters per step) then signed turn angles (t_p - 2 values).
Tensor motion_profile(const std::vector<Vec2>& past);

namespace graph {

// Model parameters bound to a tape as differentiable leaves.
struct Model {
    Tape* tape = nullptr;
    ModelConfig cfg;
    Var init_g;
    struct MlpVars {
        Var w1, b1, w2, b2;
    };
    MlpVars init_h, rel;
    struct BlockVars {
        Var ra;
        MlpVars att;
        std::vector<MlpVars> edge;
        Var nl_q, nl_k;
        MlpVars msg, upd;
    };
    std::vector<BlockVars> blocks;
    std::vector<Var> decoders;
    // Leaf vars in for_each_param registry order, for gradient extraction.
    std::vector<Var> param_order;
};

Model bind(Tape& tape, const ModelParams& params);

Var apply_mlp(Tape& t, const Model::MlpVars& m, Var x);

std::vector<Var> init_equivariant(Model& m, const Scene& scene, bool centered = true);
std::vector<Var> init_invariant(Model& m, const Scene& scene);
// Ordered pairs, index i*M+j; diagonal slots hold invalid Vars.
std::vector<Var> infer_relations(Model& m, const std::vector<Var>& h, const std::vector<Var>& g);
void route_attraction(Model& m, std::vector<Var>& g, Var route, std::size_t block);
void inner_aggregation(Model& m, std::vector<Var>& g, const std::vector<Var>& h,
                       std::size_t block);
void neighbor_aggregation(Model& m, std::vector<Var>& g, const std::vector<Var>& h,
                          const std::vector<Var>& relations, std::size_t block);
void equivariant_nonlinearity(Model& m, std::vector<Var>& g, std::size_t block);
void invariant_update(Model& m, const std::vector<Var>& g, std::vector<Var>& h,
                      std::size_t block);

struct Features {
    std::vector<Var> g;  // M of channels x 2
    std::vector<Var> h;  // M of hidden x 1
};

Features forward(Model& m, const Scene& scene, const ForwardOptions& options = {});

}  // namespace graph

// Value-level wrappers over the graph functions (fresh tape per call).
EquivariantState init_equivariant(const Scene& scene, const ModelParams& params,
                                  bool centered = true);
InvariantState init_invariant(const Scene& scene, const ModelParams& params);
RelationTensor infer_relations(const InvariantState& h, const EquivariantState& g,
                               const ModelParams& params);
EquivariantState route_attraction(const EquivariantState& g, const RouteEmbedding& route,
                                  std::size_t block, const ModelParams& params);
EquivariantState inner_aggregation(const EquivariantState& g, const InvariantState& h,
                                   std::size_t block, const ModelParams& params);
EquivariantState neighbor_aggregation(const EquivariantState& g, const InvariantState& h,
                                      const RelationTensor& relations, std::size_t block,
                                      const ModelParams& params);
EquivariantState equivariant_nonlinearity(const EquivariantState& g, std::size_t block,
                                          const ModelParams& params);
InvariantState invariant_update(const EquivariantState& g, const InvariantState& h,
                                std::size_t block, const ModelParams& params);
std::pair<EquivariantState, InvariantState> forward(const Scene& scene,
                                                    const ModelParams& params,
                                                    const ForwardOptions& options = {});

}  // namespace equiplan
