"""Torch modules: style backbones, pair classifier and dual encoder."""
