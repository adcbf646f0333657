import pytest

from itd2d.config import RunConfig, load_config, parse_config
from itd2d.errors import ConfigError
from itd2d.params import CONFIG1, CONFIG2


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.thermal == CONFIG1
    assert cfg.spectral.n_states == 25
    assert cfg.grid == (100, 100)
    assert cfg.ekf.r_meas == pytest.approx(9e-10) and cfg.ekf.meas_period == 24.0
    assert cfg.kf.q_proc_beta == 0.05
    assert cfg.seed == 0 and cfg.mode == "ekf_z"


def test_preset_and_overrides():
    cfg = parse_config('[thermal]\npreset = "config2"\nh_side = 40\n')
    assert cfg.thermal == CONFIG2.with_values(h_side=40.0)


def test_full_schema(tmp_path):
    text = """
seed = 9
[geometry]
r_in = 0.002
r_out = 0.02
height = 0.07
[thermal]
preset = "config1"
k_z = 25
[spectral]
n_r = 4
n_z = 6
[electrical]
capacity = 2.5
soc0 = 0.6
r0 = 0.01
ocv_soc = [0.0, 0.5, 1.0]
ocv_voltage = [3.0, 3.3, 3.5]
[estimator]
mode = "kf_t3"
dt = 1
meas_period = 12
p0_std = 5
t0_estimate = 20
sigma_n_z = 4e-5
beta_v_z = 1e-3
sigma_n_t3 = 1e-3
beta_v_t3 = 0.1
[impedance]
a1 = 2e-3
a2 = -3e-5
a3 = 1e-7
frequency = 100
noise_sigma = 1e-5
[twin]
duration = 1200
i_max = 30
t_true0 = 10
tc_noise = 0.01
converge_after = 200
fd_n_r = 50
fd_n_z = 60
fd_dt = 0.5
calibrate = false
[identify]
free = ["h_left", "h_side"]
bounds = { h_left = [1, 300] }
n_starts = 5
n_polish = 2
t_initial = 9
[output]
grid_r = 30
grid_z = 40
[paths]
cycle = "c.csv"
calibration = "cal.json"
out = "results"
"""
    path = tmp_path / "run.toml"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.seed == 9 and cfg.geometry.height == 0.07 and cfg.thermal.k_z == 25.0
    assert cfg.spectral.n_r == 4 and cfg.cell.capacity == 2.5 and cfg.r0 == 0.01
    assert cfg.ocv(0.25) == pytest.approx(3.15)
    assert cfg.mode == "kf_t3" and cfg.kf.meas_period == 12.0 and cfg.t0_estimate == 20.0
    assert cfg.impedance.frequency == 100.0 and cfg.z_noise == 1e-5
    assert cfg.twin.fd_grid.n_z_cells == 60 and not cfg.twin.calibrate
    assert cfg.identify.free == ("h_left", "h_side") and cfg.identify.bounds["h_left"] == (1.0, 300.0)
    assert cfg.grid == (30, 40)
    assert cfg.cycle_path == tmp_path / "c.csv" and cfg.out_dir == tmp_path / "results"


@pytest.mark.parametrize("text, where", [
    ("[thermal]\nk_zz = 3\n", "thermal.k_zz"),
    ("[plotting]\nx = 1\n", "plotting"),
    ("[spectral]\nn_r = 2.5\n", "spectral.n_r"),
    ("[twin]\ncalibrate = 1\n", "twin.calibrate"),
    ("[thermal]\npreset = \"config3\"\n", "thermal.preset"),
    ("[estimator]\nmode = \"ukf\"\n", "estimator.mode"),
    ("[identify]\nfree = [\"rho\"]\n", "identify.free"),
    ("[identify]\nbounds = { h_left = [5, 1] }\n", "identify.bounds.h_left"),
    ("[identify]\nbounds = { rho = [1, 5] }\n", "identify.bounds.rho"),
    ("[geometry]\nr_in = 0.02\n", "geometry"),
    ("[electrical]\nocv_soc = [0.0, 1.0]\n", "electrical"),
    ("[output]\ngrid_r = 1\n", "output"),
    ("seed = \"x\"\n", "seed"),
    ("[thermal\n", "line 1"),
])
def test_schema_violations_name_the_key(text, where):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert where in str(err.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_estimator_config_selection():
    cfg = RunConfig()
    assert cfg.estimator_config("kf_t3") is cfg.kf
    assert cfg.estimator_config("ekf_z") is cfg.ekf
