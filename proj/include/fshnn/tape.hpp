// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fshnn::ad {

// Opcodes of the recorded computation graph. Nodes carry vector values
// (length >= 1); elementwise opcodes require matching lengths.
enum class Op : std::uint8_t {
    Input,      // leaf fed with state values
    Param,      // leaf fed with trainable values
    Const,      // leaf with values baked in at record time
    Add,        // elementwise a + b
    Mul,        // elementwise a * b
    Neg,        // -a
    Reciprocal, // 1 / a
    Sin,
    Cos,
    Exp,
    Tanh,
    Softplus,
    Square,
    Scale,     // factor * a, factor a literal
    Sum,       // scalar sum of all entries of a
    Dot,       // scalar <a, b>
    Affine,    // W x + b, applied to `batch` stacked column vectors
    Concat,    // [a; b]
    Repeat,    // a tiled `repeats` times
    AvgPool2d, // per-channel block mean on a (ch, ny, nx) field
    Conv2d,    // periodic 2D convolution, weights (co, ci, k, k), bias (co)
};

struct Node {
    Op op;
    int a = -1, b = -1, c = -1; // input node ids
    int size = 0;               // value count
    int offset = 0;             // position in the value buffer
    // opcode attributes
    int rows = 0, cols = 0, batch = 1; // Affine
    double factor = 1.0;               // Scale
    int repeats = 1;                   // Repeat
    int ch = 0, ny = 0, nx = 0;        // AvgPool2d / Conv2d field shape
    int pool = 1;                      // AvgPool2d block edge
    int ci = 0, co = 0, k = 0;         // Conv2d channels and kernel edge
};

// Per-evaluation scratch. A finished tape is read-only; each thread of
// execution owns its workspace.
struct Workspace {
    std::vector<double> val;     // primal values
    std::vector<double> tan;     // forward tangents
    std::vector<double> adj;     // reverse adjoints
    std::vector<double> adj_tan; // tangents of adjoints
};

// Append-only record of a scalar/vector computation, topologically ordered
// by construction. Recording computes primal values immediately, so the
// recorded buffer caches the primals at the recorded leaf values.
class Tape {
public:
    // --- recording -------------------------------------------------------
    int input(std::span<const double> values);
    int param(const std::string& name, std::span<const double> values,
              std::vector<int> shape);
    int constant(std::span<const double> values);
    int constant(double value);

    int add(int a, int b);
    int sub(int a, int b); // emitted as add(a, neg(b))
    int mul(int a, int b);
    int neg(int a);
    int reciprocal(int a);
    int sin(int a);
    int cos(int a);
    int exp(int a);
    int tanh(int a);
    int softplus(int a);
    int square(int a);
    int scale(int a, double factor);
    int sum(int a);
    int dot(int a, int b);
    // y = W x + b for `batch` stacked inputs of length `cols`; W is row-major
    // (rows x cols), b has length rows, output length batch*rows.
    int affine(int w, int x, int bias, int rows, int cols, int batch = 1);
    int concat(int a, int b);
    int repeat(int a, int repeats);
    int avg_pool2d(int a, int ch, int ny, int nx, int pool);
    // Periodic convolution of input (ci, ny, nx) with weights (co, ci, k, k)
    // and bias (co); k odd; output (co, ny, nx).
    int conv2d(int w, int x, int bias, int ci, int co, int ny, int nx, int k);

    void mark_output(int node);

    // --- finished-tape queries --------------------------------------------
    int node_count() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    int value_count() const { return value_count_; }
    const std::vector<int>& outputs() const { return outputs_; }
    const std::vector<int>& leaves() const { return leaves_; }
    const std::vector<int>& input_leaves() const { return input_leaves_; }
    const std::vector<int>& param_leaves() const { return param_leaves_; }
    const std::vector<double>& recorded() const { return recorded_; }
    int leaf_value_count() const;
    int input_dim() const;
    int param_dim() const;
    int output_dim() const;

    // --- execution (read-only on the tape) ---------------------------------
    void prepare(Workspace& ws) const; // size val buffer, copy recorded values

    void set_leaf_values(Workspace& ws, std::span<const double> values) const;
    void set_inputs(Workspace& ws, std::span<const double> values) const;
    void set_params(Workspace& ws, std::span<const double> values) const;

    // Recompute all primals from the leaf values currently in ws.val.
    // Throws on a non-finite intermediate, naming the node.
    void forward(Workspace& ws) const;

    // Reverse sweep. Seeds the adjoint of each output node from `seed`
    // (concatenated across outputs) and accumulates adjoints for every node.
    void backward(Workspace& ws, std::span<const double> seed) const;

    // Forward tangent sweep; `dir` spans the input leaves (param and const
    // tangents are zero). Requires a prior forward().
    void forward_tangent(Workspace& ws, std::span<const double> dir) const;

    // Tangent-of-adjoint sweep. Requires forward(), backward() and
    // forward_tangent() to have run on ws. Seeds the output adjoint tangent
    // with zero, i.e. differentiates the reverse pass along the forward
    // tangent direction.
    void backward_tangent(Workspace& ws) const;

    // Gather helpers.
    void leaf_adjoints(const Workspace& ws, const std::vector<int>& leaf_ids,
                       std::vector<double>& out) const;

private:
    int push(Node n);
    void compute(int id, std::vector<double>& buf) const;
    void check_finite(int id, const std::vector<double>& buf) const;

    std::vector<Node> nodes_;
    std::vector<double> recorded_;
    std::vector<int> leaves_;
    std::vector<int> input_leaves_;
    std::vector<int> param_leaves_;
    std::vector<int> outputs_;
    int value_count_ = 0;

public:
    // Names and shapes of param leaves in registration order; the stable
    // layout used by ParamVector and checkpoint files.
    struct ParamSlot {
        std::string name;
        int node = -1;
        std::vector<int> shape;
    };
    const std::vector<ParamSlot>& param_slots() const { return param_slots_; }

private:
    std::vector<ParamSlot> param_slots_;
};

// --- spec-level entry points -----------------------------------------------

// Primal values of all output nodes at the given leaf values (all leaves,
// creation order).
std::vector<double> evaluate(const Tape& tape, std::span<const double> leaf_values);

// Reverse-mode gradient of the single scalar output with respect to the
// given leaves (concatenated in the order passed). Uses the recorded leaf
// values.
std::vector<double> grad(const Tape& tape, const std::vector<int>& wrt);

// d/dtheta [ dir . grad_z H ] for a scalar-output tape, via a tangent sweep
// through the reverse pass. `dir` spans the input leaves; the result spans
// the param leaves.
std::vector<double> mixed_second(const Tape& tape, std::span<const double> dir);

} // namespace fshnn::ad
