#include "geora/adapters.hpp"

#include "geora/spectral.hpp"

namespace geora {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::geora: return "geora";
        case Method::pissa: return "pissa";
        case Method::milora: return "milora";
        case Method::lora: return "lora";
        case Method::random_r: return "random_r";
        case Method::tail_r: return "tail_r";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : kAllMethods) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw DomainError("unknown adapter method '" + std::string(name) + "'");
}

namespace {

struct Components {
    Matrix a;
    Matrix b;
    bool rank_deficient = false;
};

// A = S^{1/2} V^T and B = U S^{1/2} over the selected singular triplets.
Components split_components(const SvdFactors<double>& f, Index first, Index count) {
    const double zero_tol = f.sigma(0) * 1e-13 * static_cast<double>(std::max(f.u.rows(), f.v.rows()));
    Vector root(count);
    bool deficient = false;
    for (Index i = 0; i < count; ++i) {
        const double s = f.sigma(first + i);
        if (s <= zero_tol) {
            root(i) = 0.0;
            deficient = true;
        } else {
            root(i) = std::sqrt(s);
        }
    }
    Components c;
    c.a = root.asDiagonal() * f.v.middleCols(first, count).transpose();
    c.b = f.u.middleCols(first, count) * root.asDiagonal();
    c.rank_deficient = deficient;
    return c;
}

Components head_components(const Matrix& target, Index r) {
    return split_components(svd(target), 0, r);
}

Components tail_components(const Matrix& target, Index r) {
    const auto f = svd(target);
    return split_components(f, f.size() - r, r);
}

}  // namespace

AdapterBundle init_adapter(const Matrix& w, const InitSpec& spec) {
    require_finite(w, "init_adapter");
    const Index k = std::min(w.rows(), w.cols());
    if (k == 0) {
        throw DomainError("init_adapter: empty weight matrix");
    }
    if (spec.rank < 1 || spec.rank > k) {
        throw DomainError("init_adapter: rank " + std::to_string(spec.rank) + " outside [1, " +
                          std::to_string(k) + "] for a " + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()) + " matrix");
    }
    const Index r = spec.rank;

    AdapterBundle bundle;
    bundle.rank = r;
    bundle.alpha = spec.alpha.value_or(static_cast<double>(r));
    bundle.method = spec.method;
    if (!(bundle.alpha > 0.0) || !std::isfinite(bundle.alpha)) {
        throw DomainError("init_adapter: alpha must be positive and finite");
    }
    const double scale = bundle.scale();

    Components c;
    switch (spec.method) {
        case Method::geora:
            c = head_components(geo_matrix(w, spec.mask).w_geo, r);
            break;
        case Method::tail_r:
            c = tail_components(geo_matrix(w, spec.mask).w_geo, r);
            break;
        case Method::pissa:
            c = head_components(w, r);
            break;
        case Method::milora:
            c = tail_components(w, r);
            break;
        case Method::lora: {
            RandomSource rng = spec.rng;
            c.a = gaussian_matrix(r, w.cols(), 1.0 / std::sqrt(static_cast<double>(w.cols())), rng);
            c.b = Matrix::Zero(w.rows(), r);
            break;
        }
        case Method::random_r: {
            RandomSource rng = spec.rng;
            c.a = gaussian_matrix(r, w.cols(), 1.0, rng);
            c.b = gaussian_matrix(w.rows(), r, 1.0, rng);
            const Matrix w_geo = geo_matrix(w, spec.mask).w_geo;
            const double target = frobenius_norm(truncate(svd(w_geo), r));
            const double current = scale * frobenius_norm(c.b * c.a);
            c.b *= current > 0.0 ? target / current : 0.0;
            c.rank_deficient = target == 0.0;
            break;
        }
    }

    bundle.a = std::move(c.a);
    bundle.b = std::move(c.b);
    bundle.rank_deficient = c.rank_deficient;
    bundle.w_res = w - scale * (bundle.b * bundle.a);
    return bundle;
}

Vector forward(const AdapterBundle& bundle, const Vector& x) {
    if (x.size() != bundle.cols()) {
        throw DomainError("forward: input length " + std::to_string(x.size()) +
                          " does not match adapter cols " + std::to_string(bundle.cols()));
    }
    const Vector ax = bundle.a * x;
    return bundle.w_res * x + bundle.scale() * (bundle.b * ax);
}

Matrix merge(const AdapterBundle& bundle) {
    return bundle.w_res + bundle.scale() * (bundle.b * bundle.a);
}

Index trainable_count(Index rows, Index cols, Index rank) {
    return rank * (rows + cols);
}

Index trainable_count(const AdapterBundle& bundle) {
    return trainable_count(bundle.rows(), bundle.cols(), bundle.rank);
}

}  // namespace geora
