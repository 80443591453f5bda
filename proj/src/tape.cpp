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

#include "fshnn/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fshnn::ad {

namespace {

double softplus_val(double x)
{
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline int wrap(int i, int n)
{
    if (i < 0) return i + n;
    if (i >= n) return i - n;
    return i;
}

const char* op_name(Op op)
{
    switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Reciprocal: return "reciprocal";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Square: return "square";
    case Op::Scale: return "scale";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
    case Op::Affine: return "affine";
    case Op::Concat: return "concat";
    case Op::Repeat: return "repeat";
    case Op::AvgPool2d: return "avg_pool2d";
    case Op::Conv2d: return "conv2d";
    }
    return "?";
}

} // namespace

int Tape::push(Node n)
{
    n.offset = value_count_;
    value_count_ += n.size;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    recorded_.resize(static_cast<std::size_t>(value_count_), 0.0);
    return id;
}

int Tape::input(std::span<const double> values)
{
    Node n;
    n.op = Op::Input;
    n.size = static_cast<int>(values.size());
    const int id = push(n);
    std::memcpy(recorded_.data() + nodes_[id].offset, values.data(),
                values.size() * sizeof(double));
    leaves_.push_back(id);
    input_leaves_.push_back(id);
    return id;
}

int Tape::param(const std::string& name, std::span<const double> values,
                std::vector<int> shape)
{
    std::size_t count = 1;
    for (int s : shape) count *= static_cast<std::size_t>(s);
    if (count != values.size())
        throw std::invalid_argument("param '" + name + "': shape does not match value count");
    Node n;
    n.op = Op::Param;
    n.size = static_cast<int>(values.size());
    const int id = push(n);
    std::memcpy(recorded_.data() + nodes_[id].offset, values.data(),
                values.size() * sizeof(double));
    leaves_.push_back(id);
    param_leaves_.push_back(id);
    param_slots_.push_back({name, id, std::move(shape)});
    return id;
}

int Tape::constant(std::span<const double> values)
{
    Node n;
    n.op = Op::Const;
    n.size = static_cast<int>(values.size());
    const int id = push(n);
    std::memcpy(recorded_.data() + nodes_[id].offset, values.data(),
                values.size() * sizeof(double));
    leaves_.push_back(id);
    return id;
}

int Tape::constant(double value)
{
    return constant(std::span<const double>(&value, 1));
}

#define FSHNN_CHECK_SAME_SIZE(a, b)                                             \
    if (nodes_[a].size != nodes_[b].size)                                       \
        throw std::invalid_argument("tape: operand sizes differ");

int Tape::add(int a, int b)
{
    FSHNN_CHECK_SAME_SIZE(a, b)
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.size = nodes_[a].size;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::sub(int a, int b) { return add(a, neg(b)); }

int Tape::mul(int a, int b)
{
    FSHNN_CHECK_SAME_SIZE(a, b)
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.size = nodes_[a].size;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

#define FSHNN_UNARY(fname, opcode)                                              \
    int Tape::fname(int a)                                                      \
    {                                                                           \
        Node n;                                                                 \
        n.op = opcode;                                                          \
        n.a = a;                                                                \
        n.size = nodes_[a].size;                                                \
        const int id = push(n);                                                 \
        compute(id, recorded_);                                                 \
        return id;                                                              \
    }

FSHNN_UNARY(neg, Op::Neg)
FSHNN_UNARY(reciprocal, Op::Reciprocal)
FSHNN_UNARY(sin, Op::Sin)
FSHNN_UNARY(cos, Op::Cos)
FSHNN_UNARY(exp, Op::Exp)
FSHNN_UNARY(tanh, Op::Tanh)
FSHNN_UNARY(softplus, Op::Softplus)
FSHNN_UNARY(square, Op::Square)

#undef FSHNN_UNARY

int Tape::scale(int a, double factor)
{
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.size = nodes_[a].size;
    n.factor = factor;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::sum(int a)
{
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.size = 1;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::dot(int a, int b)
{
    FSHNN_CHECK_SAME_SIZE(a, b)
    Node n;
    n.op = Op::Dot;
    n.a = a;
    n.b = b;
    n.size = 1;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::affine(int w, int x, int bias, int rows, int cols, int batch)
{
    if (nodes_[w].size != rows * cols)
        throw std::invalid_argument("affine: weight size mismatch");
    if (nodes_[x].size != cols * batch)
        throw std::invalid_argument("affine: input size mismatch");
    if (nodes_[bias].size != rows)
        throw std::invalid_argument("affine: bias size mismatch");
    Node n;
    n.op = Op::Affine;
    n.a = w;
    n.b = x;
    n.c = bias;
    n.rows = rows;
    n.cols = cols;
    n.batch = batch;
    n.size = rows * batch;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::concat(int a, int b)
{
    Node n;
    n.op = Op::Concat;
    n.a = a;
    n.b = b;
    n.size = nodes_[a].size + nodes_[b].size;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::repeat(int a, int repeats)
{
    Node n;
    n.op = Op::Repeat;
    n.a = a;
    n.repeats = repeats;
    n.size = nodes_[a].size * repeats;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::avg_pool2d(int a, int ch, int ny, int nx, int pool)
{
    if (nodes_[a].size != ch * ny * nx)
        throw std::invalid_argument("avg_pool2d: input size mismatch");
    if (ny % pool != 0 || nx % pool != 0)
        throw std::invalid_argument("avg_pool2d: grid not divisible by pool factor");
    Node n;
    n.op = Op::AvgPool2d;
    n.a = a;
    n.ch = ch;
    n.ny = ny;
    n.nx = nx;
    n.pool = pool;
    n.size = ch * (ny / pool) * (nx / pool);
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

int Tape::conv2d(int w, int x, int bias, int ci, int co, int ny, int nx, int k)
{
    if (k % 2 == 0) throw std::invalid_argument("conv2d: kernel edge must be odd");
    if (nodes_[w].size != co * ci * k * k)
        throw std::invalid_argument("conv2d: weight size mismatch");
    if (nodes_[x].size != ci * ny * nx)
        throw std::invalid_argument("conv2d: input size mismatch");
    if (nodes_[bias].size != co)
        throw std::invalid_argument("conv2d: bias size mismatch");
    Node n;
    n.op = Op::Conv2d;
    n.a = w;
    n.b = x;
    n.c = bias;
    n.ci = ci;
    n.co = co;
    n.ny = ny;
    n.nx = nx;
    n.k = k;
    n.size = co * ny * nx;
    const int id = push(n);
    compute(id, recorded_);
    return id;
}

void Tape::mark_output(int node) { outputs_.push_back(node); }

int Tape::leaf_value_count() const
{
    int total = 0;
    for (int id : leaves_) total += nodes_[static_cast<std::size_t>(id)].size;
    return total;
}

int Tape::input_dim() const
{
    int total = 0;
    for (int id : input_leaves_) total += nodes_[static_cast<std::size_t>(id)].size;
    return total;
}

int Tape::param_dim() const
{
    int total = 0;
    for (int id : param_leaves_) total += nodes_[static_cast<std::size_t>(id)].size;
    return total;
}

int Tape::output_dim() const
{
    int total = 0;
    for (int id : outputs_) total += nodes_[static_cast<std::size_t>(id)].size;
    return total;
}

void Tape::prepare(Workspace& ws) const { ws.val = recorded_; }

void Tape::set_leaf_values(Workspace& ws, std::span<const double> values) const
{
    if (static_cast<int>(values.size()) != leaf_value_count())
        throw std::invalid_argument("tape: leaf value count mismatch");
    std::size_t pos = 0;
    for (int id : leaves_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        std::memcpy(ws.val.data() + n.offset, values.data() + pos,
                    static_cast<std::size_t>(n.size) * sizeof(double));
        pos += static_cast<std::size_t>(n.size);
    }
}

void Tape::set_inputs(Workspace& ws, std::span<const double> values) const
{
    if (static_cast<int>(values.size()) != input_dim())
        throw std::invalid_argument("tape: input value count mismatch");
    std::size_t pos = 0;
    for (int id : input_leaves_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        std::memcpy(ws.val.data() + n.offset, values.data() + pos,
                    static_cast<std::size_t>(n.size) * sizeof(double));
        pos += static_cast<std::size_t>(n.size);
    }
}

void Tape::set_params(Workspace& ws, std::span<const double> values) const
{
    if (static_cast<int>(values.size()) != param_dim())
        throw std::invalid_argument("tape: param value count mismatch");
    std::size_t pos = 0;
    for (int id : param_leaves_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        std::memcpy(ws.val.data() + n.offset, values.data() + pos,
                    static_cast<std::size_t>(n.size) * sizeof(double));
        pos += static_cast<std::size_t>(n.size);
    }
}

void Tape::check_finite(int id, const std::vector<double>& buf) const
{
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const double* v = buf.data() + n.offset;
    for (int i = 0; i < n.size; ++i) {
        if (!std::isfinite(v[i]))
            throw std::runtime_error("tape: non-finite value at node " + std::to_string(id)
                                     + " (" + op_name(n.op) + ")");
    }
}

void Tape::compute(int id, std::vector<double>& buf) const
{
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    double* y = buf.data() + n.offset;
    const double* a = n.a >= 0 ? buf.data() + nodes_[n.a].offset : nullptr;
    const double* b = n.b >= 0 ? buf.data() + nodes_[n.b].offset : nullptr;
    const double* c = n.c >= 0 ? buf.data() + nodes_[n.c].offset : nullptr;

    switch (n.op) {
    case Op::Input:
    case Op::Param:
    case Op::Const:
        break; // leaf values are set externally
    case Op::Add:
        for (int i = 0; i < n.size; ++i) y[i] = a[i] + b[i];
        break;
    case Op::Mul:
        for (int i = 0; i < n.size; ++i) y[i] = a[i] * b[i];
        break;
    case Op::Neg:
        for (int i = 0; i < n.size; ++i) y[i] = -a[i];
        break;
    case Op::Reciprocal:
        for (int i = 0; i < n.size; ++i) y[i] = 1.0 / a[i];
        break;
    case Op::Sin:
        for (int i = 0; i < n.size; ++i) y[i] = std::sin(a[i]);
        break;
    case Op::Cos:
        for (int i = 0; i < n.size; ++i) y[i] = std::cos(a[i]);
        break;
    case Op::Exp:
        for (int i = 0; i < n.size; ++i) y[i] = std::exp(a[i]);
        break;
    case Op::Tanh:
        for (int i = 0; i < n.size; ++i) y[i] = std::tanh(a[i]);
        break;
    case Op::Softplus:
        for (int i = 0; i < n.size; ++i) y[i] = softplus_val(a[i]);
        break;
    case Op::Square:
        for (int i = 0; i < n.size; ++i) y[i] = a[i] * a[i];
        break;
    case Op::Scale:
        for (int i = 0; i < n.size; ++i) y[i] = n.factor * a[i];
        break;
    case Op::Sum: {
        double s = 0.0;
        const int sz = nodes_[n.a].size;
        for (int i = 0; i < sz; ++i) s += a[i];
        y[0] = s;
        break;
    }
    case Op::Dot: {
        double s = 0.0;
        const int sz = nodes_[n.a].size;
        for (int i = 0; i < sz; ++i) s += a[i] * b[i];
        y[0] = s;
        break;
    }
    case Op::Affine:
        for (int m = 0; m < n.batch; ++m) {
            const double* xm = b + m * n.cols;
            double* ym = y + m * n.rows;
            for (int i = 0; i < n.rows; ++i) {
                const double* wi = a + i * n.cols;
                double s = c[i];
                for (int j = 0; j < n.cols; ++j) s += wi[j] * xm[j];
                ym[i] = s;
            }
        }
        break;
    case Op::Concat: {
        const int sa = nodes_[n.a].size;
        std::memcpy(y, a, static_cast<std::size_t>(sa) * sizeof(double));
        std::memcpy(y + sa, b, static_cast<std::size_t>(nodes_[n.b].size) * sizeof(double));
        break;
    }
    case Op::Repeat: {
        const int sa = nodes_[n.a].size;
        for (int r = 0; r < n.repeats; ++r)
            std::memcpy(y + r * sa, a, static_cast<std::size_t>(sa) * sizeof(double));
        break;
    }
    case Op::AvgPool2d: {
        const int oy = n.ny / n.pool, ox = n.nx / n.pool;
        const double inv = 1.0 / (n.pool * n.pool);
        for (int ch = 0; ch < n.ch; ++ch)
            for (int I = 0; I < oy; ++I)
                for (int J = 0; J < ox; ++J) {
                    double s = 0.0;
                    for (int di = 0; di < n.pool; ++di)
                        for (int dj = 0; dj < n.pool; ++dj)
                            s += a[(ch * n.ny + I * n.pool + di) * n.nx + J * n.pool + dj];
                    y[(ch * oy + I) * ox + J] = s * inv;
                }
        break;
    }
    case Op::Conv2d: {
        const int r = n.k / 2;
        for (int o = 0; o < n.co; ++o)
            for (int i = 0; i < n.ny; ++i)
                for (int j = 0; j < n.nx; ++j) {
                    double s = c[o];
                    for (int ch = 0; ch < n.ci; ++ch)
                        for (int di = 0; di < n.k; ++di) {
                            const int ii = wrap(i + di - r, n.ny);
                            const double* wrow = a + ((o * n.ci + ch) * n.k + di) * n.k;
                            const double* xrow = b + (ch * n.ny + ii) * n.nx;
                            for (int dj = 0; dj < n.k; ++dj)
                                s += wrow[dj] * xrow[wrap(j + dj - r, n.nx)];
                        }
                    y[(o * n.ny + i) * n.nx + j] = s;
                }
        break;
    }
    }
    check_finite(id, buf);
}

void Tape::forward(Workspace& ws) const
{
    if (ws.val.size() != static_cast<std::size_t>(value_count_))
        throw std::invalid_argument("tape: workspace not prepared");
    for (int id = 0; id < node_count(); ++id) compute(id, ws.val);
}

void Tape::backward(Workspace& ws, std::span<const double> seed) const
{
    ws.adj.assign(static_cast<std::size_t>(value_count_), 0.0);
    std::size_t pos = 0;
    for (int out : outputs_) {
        const Node& n = nodes_[static_cast<std::size_t>(out)];
        if (pos + static_cast<std::size_t>(n.size) > seed.size())
            throw std::invalid_argument("tape: backward seed too short");
        std::memcpy(ws.adj.data() + n.offset, seed.data() + pos,
                    static_cast<std::size_t>(n.size) * sizeof(double));
        pos += static_cast<std::size_t>(n.size);
    }

    const double* val = ws.val.data();
    double* adj = ws.adj.data();
    for (int id = node_count() - 1; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const double* gy = adj + n.offset;
        const double* va = n.a >= 0 ? val + nodes_[n.a].offset : nullptr;
        const double* vb = n.b >= 0 ? val + nodes_[n.b].offset : nullptr;
        double* ga = n.a >= 0 ? adj + nodes_[n.a].offset : nullptr;
        double* gb = n.b >= 0 ? adj + nodes_[n.b].offset : nullptr;
        double* gc = n.c >= 0 ? adj + nodes_[n.c].offset : nullptr;
        const double* vy = val + n.offset;

        switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::Const:
            break;
        case Op::Add:
            for (int i = 0; i < n.size; ++i) {
                ga[i] += gy[i];
                gb[i] += gy[i];
            }
            break;
        case Op::Mul:
            for (int i = 0; i < n.size; ++i) {
                ga[i] += gy[i] * vb[i];
                gb[i] += gy[i] * va[i];
            }
            break;
        case Op::Neg:
            for (int i = 0; i < n.size; ++i) ga[i] -= gy[i];
            break;
        case Op::Reciprocal:
            for (int i = 0; i < n.size; ++i) ga[i] -= gy[i] * vy[i] * vy[i];
            break;
        case Op::Sin:
            for (int i = 0; i < n.size; ++i) ga[i] += gy[i] * std::cos(va[i]);
            break;
        case Op::Cos:
            for (int i = 0; i < n.size; ++i) ga[i] -= gy[i] * std::sin(va[i]);
            break;
        case Op::Exp:
            for (int i = 0; i < n.size; ++i) ga[i] += gy[i] * vy[i];
            break;
        case Op::Tanh:
            for (int i = 0; i < n.size; ++i) ga[i] += gy[i] * (1.0 - vy[i] * vy[i]);
            break;
        case Op::Softplus:
            for (int i = 0; i < n.size; ++i) ga[i] += gy[i] * sigmoid(va[i]);
            break;
        case Op::Square:
            for (int i = 0; i < n.size; ++i) ga[i] += 2.0 * gy[i] * va[i];
            break;
        case Op::Scale:
            for (int i = 0; i < n.size; ++i) ga[i] += n.factor * gy[i];
            break;
        case Op::Sum: {
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) ga[i] += gy[0];
            break;
        }
        case Op::Dot: {
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) {
                ga[i] += gy[0] * vb[i];
                gb[i] += gy[0] * va[i];
            }
            break;
        }
        case Op::Affine:
            for (int m = 0; m < n.batch; ++m) {
                const double* gym = gy + m * n.rows;
                const double* xm = vb + m * n.cols;
                double* gxm = gb + m * n.cols;
                for (int i = 0; i < n.rows; ++i) {
                    const double g = gym[i];
                    if (g == 0.0) continue;
                    const double* wi = va + i * n.cols;
                    double* gwi = ga + i * n.cols;
                    for (int j = 0; j < n.cols; ++j) {
                        gxm[j] += g * wi[j];
                        gwi[j] += g * xm[j];
                    }
                    gc[i] += g;
                }
            }
            break;
        case Op::Concat: {
            const int sa = nodes_[n.a].size;
            for (int i = 0; i < sa; ++i) ga[i] += gy[i];
            const int sb = nodes_[n.b].size;
            for (int i = 0; i < sb; ++i) gb[i] += gy[sa + i];
            break;
        }
        case Op::Repeat: {
            const int sa = nodes_[n.a].size;
            for (int r = 0; r < n.repeats; ++r)
                for (int i = 0; i < sa; ++i) ga[i] += gy[r * sa + i];
            break;
        }
        case Op::AvgPool2d: {
            const int oy = n.ny / n.pool, ox = n.nx / n.pool;
            const double inv = 1.0 / (n.pool * n.pool);
            for (int ch = 0; ch < n.ch; ++ch)
                for (int I = 0; I < oy; ++I)
                    for (int J = 0; J < ox; ++J) {
                        const double g = gy[(ch * oy + I) * ox + J] * inv;
                        for (int di = 0; di < n.pool; ++di)
                            for (int dj = 0; dj < n.pool; ++dj)
                                ga[(ch * n.ny + I * n.pool + di) * n.nx + J * n.pool + dj] += g;
                    }
            break;
        }
        case Op::Conv2d: {
            const int r = n.k / 2;
            for (int o = 0; o < n.co; ++o)
                for (int i = 0; i < n.ny; ++i)
                    for (int j = 0; j < n.nx; ++j) {
                        const double g = gy[(o * n.ny + i) * n.nx + j];
                        if (g == 0.0) continue;
                        gc[o] += g;
                        for (int ch = 0; ch < n.ci; ++ch)
                            for (int di = 0; di < n.k; ++di) {
                                const int ii = wrap(i + di - r, n.ny);
                                double* gwrow = ga + ((o * n.ci + ch) * n.k + di) * n.k;
                                const double* xrow = vb + (ch * n.ny + ii) * n.nx;
                                double* gxrow = gb + (ch * n.ny + ii) * n.nx;
                                for (int dj = 0; dj < n.k; ++dj) {
                                    const int jj = wrap(j + dj - r, n.nx);
                                    gwrow[dj] += g * xrow[jj];
                                    gxrow[jj] += g * va[((o * n.ci + ch) * n.k + di) * n.k + dj];
                                }
                            }
                    }
            break;
        }
        }
    }
}

void Tape::forward_tangent(Workspace& ws, std::span<const double> dir) const
{
    if (static_cast<int>(dir.size()) != input_dim())
        throw std::invalid_argument("tape: tangent direction length mismatch");
    ws.tan.assign(static_cast<std::size_t>(value_count_), 0.0);
    std::size_t pos = 0;
    for (int id : input_leaves_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        std::memcpy(ws.tan.data() + n.offset, dir.data() + pos,
                    static_cast<std::size_t>(n.size) * sizeof(double));
        pos += static_cast<std::size_t>(n.size);
    }

    const double* val = ws.val.data();
    double* tan = ws.tan.data();
    for (int id = 0; id < node_count(); ++id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        double* ty = tan + n.offset;
        const double* va = n.a >= 0 ? val + nodes_[n.a].offset : nullptr;
        const double* vb = n.b >= 0 ? val + nodes_[n.b].offset : nullptr;
        const double* ta = n.a >= 0 ? tan + nodes_[n.a].offset : nullptr;
        const double* tb = n.b >= 0 ? tan + nodes_[n.b].offset : nullptr;
        const double* tc = n.c >= 0 ? tan + nodes_[n.c].offset : nullptr;
        const double* vy = val + n.offset;

        switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::Const:
            break; // seeded above, zero otherwise
        case Op::Add:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] + tb[i];
            break;
        case Op::Mul:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] * vb[i] + va[i] * tb[i];
            break;
        case Op::Neg:
            for (int i = 0; i < n.size; ++i) ty[i] = -ta[i];
            break;
        case Op::Reciprocal:
            for (int i = 0; i < n.size; ++i) ty[i] = -ta[i] * vy[i] * vy[i];
            break;
        case Op::Sin:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] * std::cos(va[i]);
            break;
        case Op::Cos:
            for (int i = 0; i < n.size; ++i) ty[i] = -ta[i] * std::sin(va[i]);
            break;
        case Op::Exp:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] * vy[i];
            break;
        case Op::Tanh:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] * (1.0 - vy[i] * vy[i]);
            break;
        case Op::Softplus:
            for (int i = 0; i < n.size; ++i) ty[i] = ta[i] * sigmoid(va[i]);
            break;
        case Op::Square:
            for (int i = 0; i < n.size; ++i) ty[i] = 2.0 * ta[i] * va[i];
            break;
        case Op::Scale:
            for (int i = 0; i < n.size; ++i) ty[i] = n.factor * ta[i];
            break;
        case Op::Sum: {
            double s = 0.0;
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) s += ta[i];
            ty[0] = s;
            break;
        }
        case Op::Dot: {
            double s = 0.0;
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) s += ta[i] * vb[i] + va[i] * tb[i];
            ty[0] = s;
            break;
        }
        case Op::Affine:
            for (int m = 0; m < n.batch; ++m) {
                const double* xm = vb + m * n.cols;
                const double* txm = tb + m * n.cols;
                double* tym = ty + m * n.rows;
                for (int i = 0; i < n.rows; ++i) {
                    const double* wi = va + i * n.cols;
                    const double* twi = ta + i * n.cols;
                    double s = tc[i];
                    for (int j = 0; j < n.cols; ++j)
                        s += wi[j] * txm[j] + twi[j] * xm[j];
                    tym[i] = s;
                }
            }
            break;
        case Op::Concat: {
            const int sa = nodes_[n.a].size;
            std::memcpy(ty, ta, static_cast<std::size_t>(sa) * sizeof(double));
            std::memcpy(ty + sa, tb,
                        static_cast<std::size_t>(nodes_[n.b].size) * sizeof(double));
            break;
        }
        case Op::Repeat: {
            const int sa = nodes_[n.a].size;
            for (int r = 0; r < n.repeats; ++r)
                std::memcpy(ty + r * sa, ta, static_cast<std::size_t>(sa) * sizeof(double));
            break;
        }
        case Op::AvgPool2d: {
            const int oy = n.ny / n.pool, ox = n.nx / n.pool;
            const double inv = 1.0 / (n.pool * n.pool);
            for (int ch = 0; ch < n.ch; ++ch)
                for (int I = 0; I < oy; ++I)
                    for (int J = 0; J < ox; ++J) {
                        double s = 0.0;
                        for (int di = 0; di < n.pool; ++di)
                            for (int dj = 0; dj < n.pool; ++dj)
                                s += ta[(ch * n.ny + I * n.pool + di) * n.nx + J * n.pool + dj];
                        ty[(ch * oy + I) * ox + J] = s * inv;
                    }
            break;
        }
        case Op::Conv2d: {
            const int r = n.k / 2;
            for (int o = 0; o < n.co; ++o)
                for (int i = 0; i < n.ny; ++i)
                    for (int j = 0; j < n.nx; ++j) {
                        double s = tc[o];
                        for (int ch = 0; ch < n.ci; ++ch)
                            for (int di = 0; di < n.k; ++di) {
                                const int ii = wrap(i + di - r, n.ny);
                                const double* wrow = va + ((o * n.ci + ch) * n.k + di) * n.k;
                                const double* twrow = ta + ((o * n.ci + ch) * n.k + di) * n.k;
                                const double* xrow = vb + (ch * n.ny + ii) * n.nx;
                                const double* txrow = tb + (ch * n.ny + ii) * n.nx;
                                for (int dj = 0; dj < n.k; ++dj) {
                                    const int jj = wrap(j + dj - r, n.nx);
                                    s += wrow[dj] * txrow[jj] + twrow[dj] * xrow[jj];
                                }
                            }
                        ty[(o * n.ny + i) * n.nx + j] = s;
                    }
            break;
        }
        }
    }
}

void Tape::backward_tangent(Workspace& ws) const
{
    if (ws.adj.size() != static_cast<std::size_t>(value_count_)
        || ws.tan.size() != static_cast<std::size_t>(value_count_))
        throw std::invalid_argument("tape: backward_tangent requires backward and forward_tangent");
    ws.adj_tan.assign(static_cast<std::size_t>(value_count_), 0.0);

    const double* val = ws.val.data();
    const double* tan = ws.tan.data();
    const double* adj = ws.adj.data();
    double* ht = ws.adj_tan.data();
    for (int id = node_count() - 1; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const double* gy = adj + n.offset;
        const double* hy = ht + n.offset;
        const double* va = n.a >= 0 ? val + nodes_[n.a].offset : nullptr;
        const double* vb = n.b >= 0 ? val + nodes_[n.b].offset : nullptr;
        const double* ta = n.a >= 0 ? tan + nodes_[n.a].offset : nullptr;
        const double* tb = n.b >= 0 ? tan + nodes_[n.b].offset : nullptr;
        double* ha = n.a >= 0 ? ht + nodes_[n.a].offset : nullptr;
        double* hb = n.b >= 0 ? ht + nodes_[n.b].offset : nullptr;
        double* hc = n.c >= 0 ? ht + nodes_[n.c].offset : nullptr;
        const double* vy = val + n.offset;
        const double* ty = tan + n.offset;

        switch (n.op) {
        case Op::Input:
        case Op::Param:
        case Op::Const:
            break;
        case Op::Add:
            for (int i = 0; i < n.size; ++i) {
                ha[i] += hy[i];
                hb[i] += hy[i];
            }
            break;
        case Op::Mul:
            for (int i = 0; i < n.size; ++i) {
                ha[i] += hy[i] * vb[i] + gy[i] * tb[i];
                hb[i] += hy[i] * va[i] + gy[i] * ta[i];
            }
            break;
        case Op::Neg:
            for (int i = 0; i < n.size; ++i) ha[i] -= hy[i];
            break;
        case Op::Reciprocal:
            // d/dalpha of (-gy * vy^2): vy tangent is ty
            for (int i = 0; i < n.size; ++i)
                ha[i] -= hy[i] * vy[i] * vy[i] + 2.0 * gy[i] * vy[i] * ty[i];
            break;
        case Op::Sin:
            for (int i = 0; i < n.size; ++i)
                ha[i] += hy[i] * std::cos(va[i]) - gy[i] * std::sin(va[i]) * ta[i];
            break;
        case Op::Cos:
            for (int i = 0; i < n.size; ++i)
                ha[i] += -hy[i] * std::sin(va[i]) - gy[i] * std::cos(va[i]) * ta[i];
            break;
        case Op::Exp:
            for (int i = 0; i < n.size; ++i) ha[i] += hy[i] * vy[i] + gy[i] * ty[i];
            break;
        case Op::Tanh:
            for (int i = 0; i < n.size; ++i)
                ha[i] += hy[i] * (1.0 - vy[i] * vy[i]) - 2.0 * gy[i] * vy[i] * ty[i];
            break;
        case Op::Softplus:
            for (int i = 0; i < n.size; ++i) {
                const double s = sigmoid(va[i]);
                ha[i] += hy[i] * s + gy[i] * s * (1.0 - s) * ta[i];
            }
            break;
        case Op::Square:
            for (int i = 0; i < n.size; ++i)
                ha[i] += 2.0 * (hy[i] * va[i] + gy[i] * ta[i]);
            break;
        case Op::Scale:
            for (int i = 0; i < n.size; ++i) ha[i] += n.factor * hy[i];
            break;
        case Op::Sum: {
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) ha[i] += hy[0];
            break;
        }
        case Op::Dot: {
            const int sz = nodes_[n.a].size;
            for (int i = 0; i < sz; ++i) {
                ha[i] += hy[0] * vb[i] + gy[0] * tb[i];
                hb[i] += hy[0] * va[i] + gy[0] * ta[i];
            }
            break;
        }
        case Op::Affine:
            for (int m = 0; m < n.batch; ++m) {
                const double* gym = gy + m * n.rows;
                const double* hym = hy + m * n.rows;
                const double* xm = vb + m * n.cols;
                const double* txm = tb + m * n.cols;
                double* hxm = hb + m * n.cols;
                for (int i = 0; i < n.rows; ++i) {
                    const double g = gym[i];
                    const double h = hym[i];
                    if (g == 0.0 && h == 0.0) continue;
                    const double* wi = va + i * n.cols;
                    const double* twi = ta + i * n.cols;
                    double* hwi = ha + i * n.cols;
                    for (int j = 0; j < n.cols; ++j) {
                        hxm[j] += h * wi[j] + g * twi[j];
                        hwi[j] += h * xm[j] + g * txm[j];
                    }
                    hc[i] += h;
                }
            }
            break;
        case Op::Concat: {
            const int sa = nodes_[n.a].size;
            for (int i = 0; i < sa; ++i) ha[i] += hy[i];
            const int sb = nodes_[n.b].size;
            for (int i = 0; i < sb; ++i) hb[i] += hy[sa + i];
            break;
        }
        case Op::Repeat: {
            const int sa = nodes_[n.a].size;
            for (int r = 0; r < n.repeats; ++r)
                for (int i = 0; i < sa; ++i) ha[i] += hy[r * sa + i];
            break;
        }
        case Op::AvgPool2d: {
            const int oy = n.ny / n.pool, ox = n.nx / n.pool;
            const double inv = 1.0 / (n.pool * n.pool);
            for (int ch = 0; ch < n.ch; ++ch)
                for (int I = 0; I < oy; ++I)
                    for (int J = 0; J < ox; ++J) {
                        const double h = hy[(ch * oy + I) * ox + J] * inv;
                        for (int di = 0; di < n.pool; ++di)
                            for (int dj = 0; dj < n.pool; ++dj)
                                ha[(ch * n.ny + I * n.pool + di) * n.nx + J * n.pool + dj] += h;
                    }
            break;
        }
        case Op::Conv2d: {
            const int r = n.k / 2;
            for (int o = 0; o < n.co; ++o)
                for (int i = 0; i < n.ny; ++i)
                    for (int j = 0; j < n.nx; ++j) {
                        const double g = gy[(o * n.ny + i) * n.nx + j];
                        const double h = hy[(o * n.ny + i) * n.nx + j];
                        if (g == 0.0 && h == 0.0) continue;
                        hc[o] += h;
                        for (int ch = 0; ch < n.ci; ++ch)
                            for (int di = 0; di < n.k; ++di) {
                                const int ii = wrap(i + di - r, n.ny);
                                const int wbase = ((o * n.ci + ch) * n.k + di) * n.k;
                                const int xbase = (ch * n.ny + ii) * n.nx;
                                for (int dj = 0; dj < n.k; ++dj) {
                                    const int jj = wrap(j + dj - r, n.nx);
                                    ha[wbase + dj] += h * vb[xbase + jj] + g * tb[xbase + jj];
                                    hb[xbase + jj] += h * va[wbase + dj] + g * ta[wbase + dj];
                                }
                            }
                    }
            break;
        }
        }
    }
}

void Tape::leaf_adjoints(const Workspace& ws, const std::vector<int>& leaf_ids,
                         std::vector<double>& out) const
{
    out.clear();
    for (int id : leaf_ids) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        for (int i = 0; i < n.size; ++i) out.push_back(ws.adj[n.offset + i]);
    }
}

std::vector<double> evaluate(const Tape& tape, std::span<const double> leaf_values)
{
    Workspace ws;
    tape.prepare(ws);
    tape.set_leaf_values(ws, leaf_values);
    tape.forward(ws);
    std::vector<double> out;
    for (int id : tape.outputs()) {
        const Node& n = tape.node(id);
        for (int i = 0; i < n.size; ++i) out.push_back(ws.val[n.offset + i]);
    }
    return out;
}

std::vector<double> grad(const Tape& tape, const std::vector<int>& wrt)
{
    if (tape.outputs().size() != 1 || tape.node(tape.outputs()[0]).size != 1)
        throw std::invalid_argument("grad: tape must have a single scalar output");
    Workspace ws;
    tape.prepare(ws);
    const double one = 1.0;
    tape.backward(ws, std::span<const double>(&one, 1));
    std::vector<double> out;
    tape.leaf_adjoints(ws, wrt, out);
    return out;
}

std::vector<double> mixed_second(const Tape& tape, std::span<const double> dir)
{
    if (tape.outputs().size() != 1 || tape.node(tape.outputs()[0]).size != 1)
        throw std::invalid_argument("mixed_second: tape must have a single scalar output");
    Workspace ws;
    tape.prepare(ws);
    const double one = 1.0;
    tape.backward(ws, std::span<const double>(&one, 1));
    tape.forward_tangent(ws, dir);
    tape.backward_tangent(ws);
    std::vector<double> out;
    for (int id : tape.param_leaves()) {
        const Node& n = tape.node(id);
        for (int i = 0; i < n.size; ++i) out.push_back(ws.adj_tan[n.offset + i]);
    }
    return out;
}

} // namespace fshnn::ad
