from ttfs.config import ExperimentConfig


def tiny_config(t_final=2.0, **sections):
    cfg = ExperimentConfig().replace(
        reference={"t_final": t_final},
        sac={"hidden": 8, "batch_size": 16, "buffer_size": 5000, "warmup_steps": 30},
        train={"window": 3},
    )
    return cfg.replace(**sections) if sections else cfg
