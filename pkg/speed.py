import timeit
from cimguard.layers import presets


def do(setup_statements, statement):
    # extracted from timeit.py
    t = timeit.Timer(stmt=statement, setup="\n".join(setup_statements))
    # determine number so that 0.2 <= total time < 2.0
    for i in range(0, 10):
        number = 10 ** i
        x = t.timeit(number)
        if x >= 0.2:
            break
    return x / number


prnt_form = (
    "{name:>14}{sep:1} {tiles:>6} {program:>9{form}}{unit:1} "
    "{exact:>9{form}}{unit:1} {exact_inv:>9{form_inv}} "
    "{adc:>9{form}}{unit:1} {adc_inv:>9{form_inv}}"
)

print(
    prnt_form.format(
        tiles="tiles",
        program="program",
        exact="exact",
        exact_inv="exact/s",
        adc="adc",
        adc_inv="adc/s",
        name="",
        sep="",
        unit="",
        form="",
        form_inv="",
    )
)

for net in [i.name for i in presets if i.name != "vgg8-desk"]:
    S1 = (
        "import numpy as np; from cimguard import find_preset, Accelerator, "
        "AdcConfig, gen_fingerprint; from cimguard.training import init_model"
    )
    S2 = "net = find_preset(%r); model = init_model(net)" % net
    S3 = "x = np.random.default_rng(0).random((16,) + net.input_shape)"
    S4 = "acc = Accelerator(net, model, AdcConfig())"
    S5 = "chip = gen_fingerprint(1, AdcConfig(), acc.tile_count)"
    S6 = "acc.forward(x)"
    S7 = "acc.forward(x, chip)"
    program = do([S1, S2, S3], S4)
    exact = do([S1, S2, S3, S4], S6)
    adc = do([S1, S2, S3, S4, S5], S7)
    from cimguard import Accelerator, AdcConfig, find_preset
    from cimguard.training import init_model

    spec = find_preset(net)
    tiles = Accelerator(spec, init_model(spec), AdcConfig()).tile_count
    print(
        prnt_form.format(
            name=net,
            sep=":",
            tiles=tiles,
            unit="s",
            program=program,
            exact=exact,
            exact_inv=16.0 / exact,
            adc=adc,
            adc_inv=16.0 / adc,
            form=".5f",
            form_inv=".1f",
        )
    )

print("")

mc_form = "{name:>14}{sep:1} {mc:>9{form}}{unit:1} {mc_inv:>9{form_inv}}"

print(
    mc_form.format(
        mc="10k keys",
        mc_inv="keys/s",
        name="",
        sep="",
        unit="",
        form="",
        form_inv="",
    )
)

for n, k in [(16, 0), (128, 0), (128, 16)]:
    S1 = "from cimguard.bounds import monte_carlo_match"
    S2 = "monte_carlo_match({0}, {1}, 10000)".format(n, k)
    mc = do([S1], S2)
    print(
        mc_form.format(
            name="N={0} k={1}".format(n, k),
            sep=":",
            unit="s",
            form=".5f",
            form_inv=".0f",
            mc=mc,
            mc_inv=10000 / mc,
        )
    )
