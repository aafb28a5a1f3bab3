#include "targetamp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace targetamp {

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->grad = Tensor::zeros(n->value.rows, n->value.cols);
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes [" << a.rows << "x" << a.cols << "] and ["
       << b.rows << "x" << b.cols << "]";
    throw std::invalid_argument(os.str());
}

}  // namespace

NodePtr make_param(Tensor value) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor::zeros(value.rows, value.cols);
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

NodePtr make_constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor::zeros(value.rows, value.cols);
    n->value = std::move(value);
    n->requires_grad = false;
    return n;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.cols != bv.rows) shape_error("matmul", av, bv);
    const std::size_t m = av.rows, k = av.cols, n = bv.cols;
    Tensor out(m, n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = av.row_ptr(i);
        double* crow = out.row_ptr(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = bv.row_ptr(p);
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        const NodePtr& b = self.parents[1];
        const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
        if (a->requires_grad) {
            // dA = dC * B^T, both rows contiguous
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = self.grad.row_ptr(i);
                double* darow = a->grad.row_ptr(i);
                for (std::size_t q = 0; q < k; ++q) {
                    const double* brow = b->value.row_ptr(q);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[q] += acc;
                }
            }
        }
        if (b->requires_grad) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = a->value.row_ptr(i);
                const double* grow = self.grad.row_ptr(i);
                for (std::size_t q = 0; q < k; ++q) {
                    const double aiq = arow[q];
                    if (aiq == 0.0) continue;
                    double* dbrow = b->grad.row_ptr(q);
                    for (std::size_t j = 0; j < n; ++j) dbrow[j] += aiq * grow[j];
                }
            }
        }
    });
}

NodePtr transpose(const NodePtr& a) {
    const Tensor& av = a->value;
    Tensor out(av.cols, av.rows);
    for (std::size_t i = 0; i < av.rows; ++i)
        for (std::size_t j = 0; j < av.cols; ++j) out.at(j, i) = av.at(i, j);
    return make_node(std::move(out), {a}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.rows; ++i)
            for (std::size_t j = 0; j < self.grad.cols; ++j)
                a->grad.at(j, i) += self.grad.at(i, j);
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    const bool broadcast = bv.rows == 1 && av.rows != 1 && bv.cols == av.cols;
    if (!broadcast && !av.same_shape(bv)) shape_error("add", av, bv);
    Tensor out = av;
    if (broadcast) {
        for (std::size_t i = 0; i < out.rows; ++i) {
            double* orow = out.row_ptr(i);
            const double* brow = bv.row_ptr(0);
            for (std::size_t j = 0; j < out.cols; ++j) orow[j] += brow[j];
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    }
    return make_node(std::move(out), {a, b}, [broadcast](Node& self) {
        const NodePtr& a = self.parents[0];
        const NodePtr& b = self.parents[1];
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a->grad.data[i] += self.grad.data[i];
        if (b->requires_grad) {
            if (broadcast) {
                for (std::size_t i = 0; i < self.grad.rows; ++i) {
                    const double* grow = self.grad.row_ptr(i);
                    double* brow = b->grad.row_ptr(0);
                    for (std::size_t j = 0; j < self.grad.cols; ++j) brow[j] += grow[j];
                }
            } else {
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    b->grad.data[i] += self.grad.data[i];
            }
        }
    });
}

NodePtr scale(const NodePtr& a, double c) {
    Tensor out = a->value;
    for (double& v : out.data) v *= c;
    return make_node(std::move(out), {a}, [c](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad.data[i] += c * self.grad.data[i];
    });
}

NodePtr relu(const NodePtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_node(std::move(out), {a}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (a->value.data[i] > 0.0) a->grad.data[i] += self.grad.data[i];
    });
}

void softmax_row_inplace(double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = std::exp(x[j] - mx);
        sum += x[j];
    }
    for (std::size_t j = 0; j < n; ++j) x[j] /= sum;
}

NodePtr row_softmax(const NodePtr& a) {
    if (!a->value.all_finite())
        throw std::invalid_argument("row_softmax: non-finite input");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.rows; ++i) softmax_row_inplace(out.row_ptr(i), out.cols);
    return make_node(std::move(out), {a}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        // ds_j = p_j * (dy_j - sum_k dy_k p_k)
        for (std::size_t i = 0; i < self.grad.rows; ++i) {
            const double* p = self.value.row_ptr(i);
            const double* dy = self.grad.row_ptr(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < self.grad.cols; ++j) dot += dy[j] * p[j];
            double* dx = a->grad.row_ptr(i);
            for (std::size_t j = 0; j < self.grad.cols; ++j) dx[j] += p[j] * (dy[j] - dot);
        }
    });
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, double eps) {
    const Tensor& xv = x->value;
    const std::size_t n = xv.cols;
    if (n == 0) throw std::invalid_argument("layer_norm: empty rows");
    if (gain->value.rows != 1 || gain->value.cols != n) shape_error("layer_norm gain", xv, gain->value);
    if (bias->value.rows != 1 || bias->value.cols != n) shape_error("layer_norm bias", xv, bias->value);

    Tensor out(xv.rows, n);
    // Per-row mean and inverse std are cached for the backward pass.
    auto stats = std::make_shared<Tensor>(xv.rows, 2);
    for (std::size_t i = 0; i < xv.rows; ++i) {
        const double* row = xv.row_ptr(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        stats->at(i, 0) = mean;
        stats->at(i, 1) = inv_std;
        double* orow = out.row_ptr(i);
        const double* g = gain->value.row_ptr(0);
        const double* b = bias->value.row_ptr(0);
        for (std::size_t j = 0; j < n; ++j)
            orow[j] = (row[j] - mean) * inv_std * g[j] + b[j];
    }
    return make_node(std::move(out), {x, gain, bias}, [stats](Node& self) {
        const NodePtr& x = self.parents[0];
        const NodePtr& gain = self.parents[1];
        const NodePtr& bias = self.parents[2];
        const std::size_t n = x->cols();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < x->rows(); ++i) {
            const double mean = stats->at(i, 0);
            const double inv_std = stats->at(i, 1);
            const double* row = x->value.row_ptr(i);
            const double* dy = self.grad.row_ptr(i);
            const double* g = gain->value.row_ptr(0);
            double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double xhat = (row[j] - mean) * inv_std;
                const double dyg = dy[j] * g[j];
                sum_dyg += dyg;
                sum_dyg_xhat += dyg * xhat;
            }
            if (x->requires_grad) {
                double* dx = x->grad.row_ptr(i);
                for (std::size_t j = 0; j < n; ++j) {
                    const double xhat = (row[j] - mean) * inv_std;
                    const double dyg = dy[j] * g[j];
                    dx[j] += inv_std * (dyg - inv_n * sum_dyg - xhat * inv_n * sum_dyg_xhat);
                }
            }
            if (gain->requires_grad) {
                double* dg = gain->grad.row_ptr(0);
                for (std::size_t j = 0; j < n; ++j)
                    dg[j] += dy[j] * (row[j] - mean) * inv_std;
            }
            if (bias->requires_grad) {
                double* db = bias->grad.row_ptr(0);
                for (std::size_t j = 0; j < n; ++j) db[j] += dy[j];
            }
        }
    });
}

NodePtr cross_entropy(const NodePtr& logits, const std::vector<int>& labels) {
    const Tensor& lv = logits->value;
    if (labels.size() != lv.rows)
        throw std::invalid_argument("cross_entropy: label count does not match logit rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= lv.cols)
            throw std::invalid_argument("cross_entropy: label out of range [0, C)");

    // Softmax probabilities are cached for the backward pass.
    auto probs = std::make_shared<Tensor>(lv);
    double loss = 0.0;
    for (std::size_t i = 0; i < lv.rows; ++i) {
        double* row = probs->row_ptr(i);
        const double* in = lv.row_ptr(i);
        double mx = in[0];
        for (std::size_t j = 1; j < lv.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < lv.cols; ++j) {
            row[j] = std::exp(in[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < lv.cols; ++j) row[j] /= sum;
        // log-sum-exp form avoids log(underflowed prob) for extreme logits
        const double log_p = in[static_cast<std::size_t>(labels[i])] - mx - std::log(sum);
        loss -= log_p;
    }
    loss /= static_cast<double>(lv.rows);
    Tensor out(1, 1);
    out.at(0, 0) = loss;
    auto lbl = std::make_shared<std::vector<int>>(labels);
    return make_node(std::move(out), {logits}, [probs, lbl](Node& self) {
        const NodePtr& logits = self.parents[0];
        if (!logits->requires_grad) return;
        const double g = self.grad.at(0, 0) / static_cast<double>(logits->rows());
        for (std::size_t i = 0; i < logits->rows(); ++i) {
            const double* p = probs->row_ptr(i);
            double* dl = logits->grad.row_ptr(i);
            const auto y = static_cast<std::size_t>((*lbl)[i]);
            for (std::size_t j = 0; j < logits->cols(); ++j)
                dl[j] += g * (p[j] - (j == y ? 1.0 : 0.0));
        }
    });
}

NodePtr gather_rows(const NodePtr& table, const std::vector<std::size_t>& indices) {
    const Tensor& tv = table->value;
    for (std::size_t idx : indices)
        if (idx >= tv.rows)
            throw std::invalid_argument("gather_rows: index out of range");
    Tensor out(indices.size(), tv.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = tv.row_ptr(indices[i]);
        std::copy(src, src + tv.cols, out.row_ptr(i));
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(indices);
    return make_node(std::move(out), {table}, [idx](Node& self) {
        const NodePtr& table = self.parents[0];
        if (!table->requires_grad) return;
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const double* g = self.grad.row_ptr(i);
            double* dst = table->grad.row_ptr((*idx)[i]);
            for (std::size_t j = 0; j < self.grad.cols; ++j) dst[j] += g[j];
        }
    });
}

NodePtr slice_cols(const NodePtr& a, std::size_t start, std::size_t len) {
    const Tensor& av = a->value;
    if (start + len > av.cols)
        throw std::invalid_argument("slice_cols: range exceeds tensor width");
    Tensor out(av.rows, len);
    for (std::size_t i = 0; i < av.rows; ++i) {
        const double* src = av.row_ptr(i) + start;
        std::copy(src, src + len, out.row_ptr(i));
    }
    return make_node(std::move(out), {a}, [start, len](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        for (std::size_t i = 0; i < self.grad.rows; ++i) {
            const double* g = self.grad.row_ptr(i);
            double* dst = a->grad.row_ptr(i) + start;
            for (std::size_t j = 0; j < len; ++j) dst[j] += g[j];
        }
    });
}

NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::size_t rows = parts.front()->rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p->rows() != rows) shape_error("concat_cols", parts.front()->value, p->value);
        cols += p->cols();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i) {
            const double* src = p->value.row_ptr(i);
            std::copy(src, src + p->cols(), out.row_ptr(i) + off);
        }
        off += p->cols();
    }
    return make_node(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (const auto& p : self.parents) {
            if (p->requires_grad) {
                for (std::size_t i = 0; i < p->rows(); ++i) {
                    const double* g = self.grad.row_ptr(i) + off;
                    double* dst = p->grad.row_ptr(i);
                    for (std::size_t j = 0; j < p->cols(); ++j) dst[j] += g[j];
                }
            }
            off += p->cols();
        }
    });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t cols = parts.front()->cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p->cols() != cols) shape_error("concat_rows", parts.front()->value, p->value);
        rows += p->rows();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.row_ptr(off));
        off += p->rows();
    }
    return make_node(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (const auto& p : self.parents) {
            if (p->requires_grad) {
                const double* g = self.grad.row_ptr(off);
                for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad.data[i] += g[i];
            }
            off += p->rows();
        }
    });
}

NodePtr tile_rows(const NodePtr& a, std::size_t k) {
    const Tensor& av = a->value;
    if (av.rows != 1) throw std::invalid_argument("tile_rows: input must be a single row");
    if (k == 0) throw std::invalid_argument("tile_rows: k must be positive");
    Tensor out(k, av.cols);
    for (std::size_t i = 0; i < k; ++i)
        std::copy(av.data.begin(), av.data.end(), out.row_ptr(i));
    return make_node(std::move(out), {a}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        double* dst = a->grad.row_ptr(0);
        for (std::size_t i = 0; i < self.grad.rows; ++i) {
            const double* g = self.grad.row_ptr(i);
            for (std::size_t j = 0; j < self.grad.cols; ++j) dst[j] += g[j];
        }
    });
}

NodePtr sum_all(const NodePtr& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    Tensor out(1, 1);
    out.at(0, 0) = s;
    return make_node(std::move(out), {a}, [](Node& self) {
        const NodePtr& a = self.parents[0];
        if (!a->requires_grad) return;
        const double g = self.grad.at(0, 0);
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad.data[i] += g;
    });
}

namespace {

// Iterative post-order DFS; each node appears exactly once.
std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* child = node->parents[next_child].get();
            ++next_child;
            if (visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

void backward(const NodePtr& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss");
    if (loss->rows() != 1 || loss->cols() != 1)
        throw std::invalid_argument("backward: loss must be a [1x1] scalar");
    if (loss->grad.at(0, 0) != 0.0)
        throw std::logic_error("backward: gradients already populated, call zero_grad first");
    auto order = topo_order(loss.get());
    loss->grad.at(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

void zero_grad(const NodePtr& root) {
    if (!root) return;
    for (Node* n : topo_order(root.get())) n->grad.fill(0.0);
}

GradCheckResult grad_check(const std::function<NodePtr()>& f,
                           const std::vector<NodePtr>& params, double h) {
    if (h < 1e-6 || h > 1e-4)
        throw std::invalid_argument("grad_check: h must lie in [1e-6, 1e-4]");
    auto eval = [&]() {
        NodePtr loss = f();
        const double v = loss->value.at(0, 0);
        if (!std::isfinite(v))
            throw std::runtime_error("grad_check: aborted, loss is non-finite");
        return std::make_pair(v, loss);
    };

    auto [loss0, root] = eval();
    (void)loss0;
    zero_grad(root);
    for (const auto& p : params) p->grad.fill(0.0);
    backward(root);
    std::vector<Tensor> autodiff;
    autodiff.reserve(params.size());
    for (const auto& p : params) autodiff.push_back(p->grad);

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& v = params[pi]->value;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double orig = v.data[i];
            v.data[i] = orig + h;
            const double lp = eval().first;
            v.data[i] = orig - h;
            const double lm = eval().first;
            v.data[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = autodiff[pi].data[i];
            const double rel =
                std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.param_index = pi;
                result.coord = i;
                result.autodiff_grad = ad;
                result.fd_grad = fd;
            }
        }
    }
    for (const auto& p : params) p->grad.fill(0.0);
    return result;
}

}  // namespace targetamp
