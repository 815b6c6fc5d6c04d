//! Defining identity behind each task.

use crate::config::Task;

pub fn explain(task: Task) -> &'static str {
    match task {
        Task::CriticalPoints => "Roots p^a of Y^n dW/dy and Hessians Delta^a = p f'(p), f = Y dW/dY. Data only.",
        Task::ModelReport => {
            "Delta^a = m prod_{b != a}(z_a - z_b) / z_a^{n-1}; sum_a 1/Delta^a = (1, 1) computed from the \
             residues at 0 and infinity; Psi^T G Psi = id for the principal sqrt(Delta); phi_i(z_j) = delta_ij. \
             Anchor: residual pairing, canonical basis and Hessian of the mirror superpotential."
        }
        Task::Ring => {
            "Multiplication operators C_a = X^a commute; spec(M_X) = {p^a}; (X^a X^b, X^c) is symmetric; \
             (phi_a, phi_b) = delta_ab / Delta^a; (Y^j, 1) for j = -n+1..m does not depend on the weights. \
             Anchor: equivariant quantum ring isomorphic to Jac(W) as Frobenius algebras."
        }
        Task::IFunction => {
            "P_d I(q, z) = 0 for every lattice generator d, through the configured q-order, in exact arithmetic. \
             Anchor: Picard-Fuchs operators annihilate the I-function."
        }
        Task::RMatrix => {
            "Laplace-method R(z) = normalised asymptotic expansion of sqrt(-2 pi z) int e^{(W-u_b)/z} dY/(Y-p_a)^2; \
             R(z) R^T(-z) = id coefficient-wise. Anchor: existence of a unitary R-matrix."
        }
        Task::Prop31 => {
            "For W = Y^d + p log Y, the normalised Laplace R block equals the discrete Fourier transform of \
             exp(sum_t (-1)^{t+1} B_{t+1}(h/d) / (t(t+1)) (z/w)^t) with w = p/d; the sign (-1)^{t+1} is \
             confirmed against a 320-bit log Gamma. Anchor: large-radius limit of the B-model R-matrix."
        }
        Task::Qde => {
            "S = Psi R e^{U/z} satisfies z dS/dt_a = C_a S along every flat direction; central differences with \
             O(h^2) convergence (halving ratio near 4). Anchor: fundamental solution of the quantum differential equation."
        }
        Task::Eo => "omega_{g,N} from topological recursion is symmetric in its N arguments.",
        Task::GraphSum => {
            "The B-model graph sum over skeletons with all decorations equals the sum over decorated \
             isomorphism classes weighted by 1/|Aut|."
        }
        Task::Thm31 => {
            "omega_{g,N} = (-1)^{g-1+N} sum over labelled graphs of vertex, edge Bcheck', dilaton hcheck and dxi leaf \
             factors. Anchor: Eynard-Orantin invariants equal the B-model graph sum."
        }
        Task::Thm41 => {
            "The A-model graph sum with R_a^b(-z) and sqrt(Delta) equals (-1)^{g-1+N} omega_{g,N}; the vertex, edge, \
             ordinary-leaf and dilaton weights agree one by one. Anchor: identification of W_k^a with the dxi basis."
        }
        Task::Thimble => {
            "Numerical thimble integrals approach the truncated Laplace R with error slope >= K + 0.7 over \
             z in {-0.2, -0.1, -0.05}; -z int_SYZ e^{W/z} dy = int_SYZ e^{W/z} y dW. Anchor: thimble and SYZ \
             Laplace transforms."
        }
        Task::Prop41 => {
            "-z int_{gamma_b} e^{W/z} dxi_{a,0} / sqrt(-2) matches -z 2 sqrt(pi) / (sqrt(-2) sqrt(-z)) e^{u_b/z} R_ab(z) \
             asymptotically. Anchor: oscillatory integrals realise the S-matrix entries."
        }
        Task::Intersections => {
            "String and dilaton equations hold exactly on all <tau_k...>_g with g <= 2, N <= 4; \
             <tau_0^3>_0 = 1 and <tau_1>_1 = 1/24."
        }
        Task::VerifyAll => "Runs every task in dependency order.",
    }
}
