#include <stdio.h>
#include <stdlib.h>
#include "nlfrac.h"

static int check(NlfracStatus st, const char *what) {
    if (st != NLFRAC_STATUS_OK) {
        const char *msg = nlfrac_last_error();
        fprintf(stderr, "%s: %s (%s)\n", what, nlfrac_status_name(st), msg ? msg : "");
        return 1;
    }
    return 0;
}

int main(void) {
    NlfracModel *model = NULL;
    NlfracCoefficients *coeffs = NULL;
    if (check(nlfrac_model_new(4.0, 129, 1.5, 2.5, -2.5, -1.5, 0.75, 0.25, &model), "model")) return 1;
    if (check(nlfrac_coefficients_zero(model, 2, 6, &coeffs), "coefficients")) return 1;
    size_t n = nlfrac_model_n_points(model), lo = 0, hi = 0;
    double *x = calloc(n, sizeof(double)), *f = calloc(n, sizeof(double)), *u = calloc(n, sizeof(double));
    if (check(nlfrac_model_grid(model, x, n, &lo, &hi), "grid")) return 1;
    for (size_t i = 0; i < n; i++) {
        double p = (x[i] - 1.5) * (2.5 - x[i]);
        f[i] = p > 0.0 ? 16.0 * p * p : 0.0;
    }
    size_t iterations = 0;
    if (check(nlfrac_solve(model, coeffs, f, u, n, 1e-12, 200, &iterations), "solve")) return 1;
    double umin = 1e300;
    for (size_t i = lo; i < hi; i++) umin = u[i] < umin ? u[i] : umin;
    printf("n=%zu omega=[%zu,%zu) iterations=%zu min_u=%.6e\n", n, lo, hi, iterations, umin);
    if (nlfrac_solve(model, coeffs, f, u, n - 1, 1e-12, 200, NULL) != NLFRAC_STATUS_INVALID_ARGUMENT) return 1;
    nlfrac_coefficients_free(coeffs);
    nlfrac_model_free(model);
    free(x);
    free(f);
    free(u);
    return umin > 0.0 ? 0 : 1;
}
