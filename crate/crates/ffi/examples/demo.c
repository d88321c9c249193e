/* Samples the limit law of a built-in model and prints a few summaries.
 *
 *   cc demo.c -I ../include ../../../target/release/libmodq_ffi.a -lpthread -ldl -lm
 */
#include <stdio.h>
#include <stdlib.h>

#include "modq.h"

static int check(ModqStatus status, const char *what) {
    if (status != MODQ_STATUS_OK) {
        const char *msg = modq_last_error_message();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)status, msg ? msg : "");
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    const char *name = argc > 1 ? argv[1] : "example1";
    ModqModel *model = NULL;
    if (check(modq_model_builtin(name, &model), "modq_model_builtin")) return 1;
    if (check(modq_model_validate(model), "modq_model_validate")) return 1;

    size_t k = modq_model_num_states(model);
    double *pi = malloc(k * sizeof *pi);
    if (check(modq_model_stationary_time(model, pi, k), "modq_model_stationary_time")) return 1;

    ModqSampler *sampler = NULL;
    if (check(modq_sampler_new(model, 1e-6, 0, 2000, 1, &sampler), "modq_sampler_new")) return 1;

    enum { N = 1000 };
    uint64_t counts[N];
    if (check(modq_sampler_draw(sampler, N, 2, NULL, NULL, counts), "modq_sampler_draw")) return 1;
    double mean = 0.0;
    for (int i = 0; i < N; i++) mean += (double)counts[i] / N;

    double p = 0.0, se = 0.0;
    if (check(modq_exceedance(sampler, 3, N, 3, &p, &se), "modq_exceedance")) return 1;

    printf("states %zu pi0 %.6f mean %.4f exceed3 %.4f se %.4f\n", k, pi[0], mean, p, se);

    /* errors leave a message behind */
    ModqModel *none = NULL;
    if (modq_model_builtin("nope", &none) != MODQ_STATUS_INVALID_ARGUMENT || !modq_last_error_message()) return 2;

    modq_sampler_free(sampler);
    modq_model_free(model);
    free(pi);
    return 0;
}
