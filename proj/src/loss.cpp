#include "refseg/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace refseg {

namespace {

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

CeTerm weighted_ce(const Prediction& pred, TaskKind task, const LabelField& target,
                   const TensorF* weights) {
    const TensorF& logits = pred.logits;
    if (logits.rank() != 3) throw std::invalid_argument("logits must be (c,h,w)");
    const uint32_t c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    if (target.height() != h || target.width() != w)
        throw std::invalid_argument("target size disagrees with logits");
    if (target.kind != task) throw std::invalid_argument("target task kind mismatch");
    if (weights && (weights->rank() != 2 || weights->dim(0) != h || weights->dim(1) != w))
        throw std::invalid_argument("weights must be (h,w)");

    CeTerm term;
    term.grad_logits = TensorF({c, h, w});
    const size_t n = static_cast<size_t>(h) * w;
    const float* z = logits.data();
    float* g = term.grad_logits.data();
    std::vector<double> p(c);

    for (size_t px = 0; px < n; ++px) {
        const uint32_t y = static_cast<uint32_t>(px / w);
        const uint32_t x = static_cast<uint32_t>(px % w);
        const double wgt = weights ? static_cast<double>((*weights)(y, x)) : 1.0;
        if (wgt == 0.0) continue;

        if (task == TaskKind::multi_class) {
            if (!target.all_decided() && !target.decided(y, x)) continue;
            const uint32_t cls = target.values(y, x);
            if (cls >= c)
                throw std::invalid_argument("target class " + std::to_string(cls) +
                                            " out of range for " + std::to_string(c) +
                                            " channels");
            double mx = z[px];
            for (uint32_t j = 1; j < c; ++j)
                mx = std::max(mx, static_cast<double>(z[j * n + px]));
            double sum = 0.0;
            for (uint32_t j = 0; j < c; ++j) {
                p[j] = std::exp(static_cast<double>(z[j * n + px]) - mx);
                sum += p[j];
            }
            double lse = mx + std::log(sum);
            term.loss_sum += wgt * (lse - static_cast<double>(z[cls * n + px]));
            for (uint32_t j = 0; j < c; ++j) {
                double grad = p[j] / sum - (j == cls ? 1.0 : 0.0);
                g[j * n + px] = static_cast<float>(wgt * grad);
            }
            term.contributing += 1;
        } else {
            int decided = 0;
            for (uint32_t j = 0; j < c; ++j)
                if (target.all_decided() || target.decided(j, y, x)) ++decided;
            if (decided == 0) continue;
            const double inv = 1.0 / static_cast<double>(decided);
            double pixel_loss = 0.0;
            for (uint32_t j = 0; j < c; ++j) {
                if (!target.all_decided() && !target.decided(j, y, x)) continue;
                const double zj = z[j * n + px];
                const double t = target.values(j, y, x) ? 1.0 : 0.0;
                pixel_loss += softplus(zj) - t * zj;
                double sig = 1.0 / (1.0 + std::exp(-zj));
                g[j * n + px] = static_cast<float>(wgt * inv * (sig - t));
            }
            term.loss_sum += wgt * inv * pixel_loss;
            term.contributing += 1;
        }
    }
    return term;
}

}  // namespace refseg
