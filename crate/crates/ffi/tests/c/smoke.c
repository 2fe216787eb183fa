#include <math.h>
#include <stdio.h>
#include "convflow.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        ConvflowStatus s_ = (call);                                              \
        if (s_ != CONVFLOW_STATUS_OK) {                                          \
            const char *m_ = convflow_last_error_message();                      \
            fprintf(stderr, "%s failed: %d %s\n", #call, (int)s_, m_ ? m_ : ""); \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: smoke CHECKPOINT_PATH\n");
        return 2;
    }
    ConvflowModel *model = NULL;
    CHECK(convflow_model_from_preset("synthetic-k8", 3, &model));
    if (convflow_model_dim(model) != 2 || convflow_model_param_count(model) != 64) {
        fprintf(stderr, "unexpected model shape\n");
        return 1;
    }
    double z[2] = {0.3, -0.7}, x[2], back[2], logdet = 0.0, logp = 0.0;
    CHECK(convflow_model_forward(model, z, 2, x, &logdet));
    CHECK(convflow_model_inverse(model, x, 2, back));
    if (fabs(back[0] - z[0]) > 1e-6 || fabs(back[1] - z[1]) > 1e-6) {
        fprintf(stderr, "round trip failed\n");
        return 1;
    }
    CHECK(convflow_model_log_density(model, x, 2, &logp));
    if (!isfinite(logp)) {
        return 1;
    }
    if (convflow_model_inverse(model, x, 3, back) != CONVFLOW_STATUS_DIMENSION_MISMATCH) {
        fprintf(stderr, "length mismatch not reported\n");
        return 1;
    }
    if (convflow_last_error_message() == NULL) {
        return 1;
    }
    CHECK(convflow_model_save(model, argv[1]));
    convflow_model_free(model);
    model = NULL;
    CHECK(convflow_model_load(argv[1], &model));
    double x2[2];
    CHECK(convflow_model_forward(model, z, 2, x2, NULL));
    if (x2[0] != x[0] || x2[1] != x[1]) {
        fprintf(stderr, "checkpoint round trip changed the model\n");
        return 1;
    }
    convflow_model_free(model);
    printf("ok\n");
    return 0;
}
