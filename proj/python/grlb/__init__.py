"""Geometry-first object removal: edit the depth map under a strict mask,
then re-render appearance conditioned on the geometric change so shadows
and reflections disappear with the object."""

from ._grlb import (
    bt_loss,
    colorize_depth,
    depth_flow,
    flow_loss,
    gen_dataset,
    generate_pair,
    local_max_fill_in,
    mask_align_replace,
    masked_mae,
    psnr,
    remove,
    remove_geometry,
    render_appearance,
    residue_iou,
    reward,
    run_onestage,
    ssim,
    train_onestage,
    train_stage1,
    train_stage2,
)

__all__ = [
    "bt_loss",
    "colorize_depth",
    "depth_flow",
    "flow_loss",
    "gen_dataset",
    "generate_pair",
    "local_max_fill_in",
    "mask_align_replace",
    "masked_mae",
    "psnr",
    "remove",
    "remove_geometry",
    "render_appearance",
    "residue_iou",
    "reward",
    "run_onestage",
    "ssim",
    "train_onestage",
    "train_stage1",
    "train_stage2",
]
