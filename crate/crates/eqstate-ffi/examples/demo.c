/* Pressure and entropy of the benchmark map with a linear potential. */
#include <stdio.h>
#include <stdlib.h>

#include "eqstate.h"

int main(void) {
    EqMap *map = NULL;
    EqPotential *pot = NULL;
    EqModel *model = NULL;
    EqEntropy ent;

    if (eq_map_benchmark(0.1, &map) != EQ_STATUS_OK) {
        fprintf(stderr, "map: %s\n", eq_last_error());
        return 1;
    }
    if (eq_potential_from_json("{\"form\": {\"kind\": \"linear\", \"intercept\": 0, \"slope\": 0.5}, \"alpha\": 1}", &pot) != EQ_STATUS_OK) {
        fprintf(stderr, "potential: %s\n", eq_last_error());
        return 1;
    }
    if (eq_model_new(map, pot, 8, &model) != EQ_STATUS_OK) {
        fprintf(stderr, "model: %s\n", eq_last_error());
        return 1;
    }
    if (eq_entropy(model, pot, &ent) != EQ_STATUS_OK) {
        fprintf(stderr, "entropy: %s\n", eq_last_error());
        return 1;
    }
    printf("P = %.12f\n", eq_model_pressure(model));
    printf("h = %.12f\n", ent.entropy);
    printf("defect = %.3e\n", ent.identity_defect);

    if (eq_map_benchmark(-1.0, &map) == EQ_STATUS_OK) {
        return 1;
    }
    printf("error = %s\n", eq_last_error());

    eq_model_free(model);
    eq_potential_free(pot);
    eq_map_free(map);
    return 0;
}
