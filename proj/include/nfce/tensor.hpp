#pragma once

// Dense complex third-order tensor algebra: unfoldings, Khatri-Rao and
// outer products. Substrate for the CPD/BTD solvers.

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace nfce {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Third-order complex tensor of size P x M x T (subcarrier x RF-chain x
// symbol). Storage is a single flat vector with mode-1 fastest:
//   index(p, m, t) = p + P*m + P*M*t
// This linearization makes vec(Y) coincide with sum_l s_l (x) a_l (x) g_l
// (Kronecker with the last factor varying fastest), which in turn pins the
// unfolding conventions below.
class Tensor3 {
public:
    Tensor3() : p_(0), m_(0), t_(0) {}
    Tensor3(int P, int M, int T) : p_(P), m_(M), t_(T), data_(CVec::Zero(static_cast<Eigen::Index>(P) * M * T)) {
        if (P < 0 || M < 0 || T < 0)
            throw std::invalid_argument("Tensor3: negative dimension");
    }

    int dim1() const { return p_; }
    int dim2() const { return m_; }
    int dim3() const { return t_; }
    Eigen::Index size() const { return data_.size(); }

    Complex operator()(int p, int m, int t) const { return data_(index(p, m, t)); }
    Complex& operator()(int p, int m, int t) { return data_(index(p, m, t)); }

    const CVec& vec() const { return data_; }
    CVec& vec() { return data_; }

    double norm() const { return data_.norm(); }
    double squaredNorm() const { return data_.squaredNorm(); }

    Tensor3 operator-(const Tensor3& o) const {
        require_same_dims(o);
        Tensor3 r(p_, m_, t_);
        r.data_ = data_ - o.data_;
        return r;
    }
    Tensor3 operator+(const Tensor3& o) const {
        require_same_dims(o);
        Tensor3 r(p_, m_, t_);
        r.data_ = data_ + o.data_;
        return r;
    }

    Eigen::Index index(int p, int m, int t) const {
        return p + static_cast<Eigen::Index>(p_) * (m + static_cast<Eigen::Index>(m_) * t);
    }

private:
    void require_same_dims(const Tensor3& o) const {
        if (p_ != o.p_ || m_ != o.m_ || t_ != o.t_)
            throw std::invalid_argument("Tensor3: dimension mismatch");
    }

    int p_, m_, t_;
    CVec data_;
};

// Mode-n unfolding. Column orderings are fixed so that for factors (G, A, S):
//   unfold(Y,1)^T = (S (*) A) G^T      column j = m + M*t
//   unfold(Y,2)^T = (S (*) G) A^T      column j = p + P*t
//   unfold(Y,3)^T = (A (*) G) S^T      column j = p + P*m
// where (*) is the Khatri-Rao product.
inline CMat unfold(const Tensor3& y, int mode) {
    const int P = y.dim1(), M = y.dim2(), T = y.dim3();
    switch (mode) {
        case 1: {
            CMat out(P, static_cast<Eigen::Index>(M) * T);
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        out(p, m + static_cast<Eigen::Index>(M) * t) = y(p, m, t);
            return out;
        }
        case 2: {
            CMat out(M, static_cast<Eigen::Index>(P) * T);
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        out(m, p + static_cast<Eigen::Index>(P) * t) = y(p, m, t);
            return out;
        }
        case 3: {
            CMat out(T, static_cast<Eigen::Index>(P) * M);
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        out(t, p + static_cast<Eigen::Index>(P) * m) = y(p, m, t);
            return out;
        }
        default:
            throw std::invalid_argument("unfold: mode must be 1, 2 or 3");
    }
}

// Inverse of unfold for the same layout conventions.
inline Tensor3 fold(const CMat& u, int mode, int P, int M, int T) {
    Tensor3 y(P, M, T);
    switch (mode) {
        case 1:
            if (u.rows() != P || u.cols() != static_cast<Eigen::Index>(M) * T)
                throw std::invalid_argument("fold: shape mismatch");
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        y(p, m, t) = u(p, m + static_cast<Eigen::Index>(M) * t);
            return y;
        case 2:
            if (u.rows() != M || u.cols() != static_cast<Eigen::Index>(P) * T)
                throw std::invalid_argument("fold: shape mismatch");
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        y(p, m, t) = u(m, p + static_cast<Eigen::Index>(P) * t);
            return y;
        case 3:
            if (u.rows() != T || u.cols() != static_cast<Eigen::Index>(P) * M)
                throw std::invalid_argument("fold: shape mismatch");
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m)
                    for (int p = 0; p < P; ++p)
                        y(p, m, t) = u(t, p + static_cast<Eigen::Index>(P) * m);
            return y;
        default:
            throw std::invalid_argument("fold: mode must be 1, 2 or 3");
    }
}

inline CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Columnwise Kronecker product: column j is kron(a[:,j], b[:,j]).
inline CMat khatri_rao(const CMat& a, const CMat& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("khatri_rao: column count mismatch");
    CMat out(a.rows() * b.rows(), a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j, b.rows(), 1) = a(i, j) * b.col(j);
    return out;
}

// Factor matrices of a rank-L decomposition, with optional per-user block
// sizes for the BTD layout (all ones for a plain CPD).
struct FactorSet {
    CMat G;  // P x L
    CMat A;  // M x L
    CMat S;  // T x L
    std::vector<int> block_sizes;  // sums to L; empty means all-ones

    int rank() const { return static_cast<int>(G.cols()); }

    void validate() const {
        if (A.cols() != G.cols() || S.cols() != G.cols())
            throw std::invalid_argument("FactorSet: inconsistent rank");
        if (!block_sizes.empty()) {
            int sum = 0;
            for (int b : block_sizes) sum += b;
            if (sum != rank())
                throw std::invalid_argument("FactorSet: block sizes do not sum to rank");
        }
    }
};

// Y[p,m,t] = sum_l G[p,l] A[m,l] S[t,l]
inline Tensor3 cpd_reconstruct(const FactorSet& f) {
    f.validate();
    const int P = static_cast<int>(f.G.rows());
    const int M = static_cast<int>(f.A.rows());
    const int T = static_cast<int>(f.S.rows());
    Tensor3 y(P, M, T);
    // vec(Y) = sum_l S[:,l] (x) A[:,l] (x) G[:,l]
    for (int l = 0; l < f.rank(); ++l)
        for (int t = 0; t < T; ++t)
            for (int m = 0; m < M; ++m)
                y.vec().segment(y.index(0, m, t), P) += f.S(t, l) * f.A(m, l) * f.G.col(l);
    return y;
}

}  // namespace nfce
