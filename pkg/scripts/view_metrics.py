#!/usr/bin/env python3
"""
Metrics Viewer
Shows the test metrics and the training curve of a pipeline run
"""

import argparse
import json
import os
import sys

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from backend.services.evaluation import format_summary
from backend.services.pipeline_config import PipelineConfig


def view_metrics(config_path, last_epochs=10):
    config = PipelineConfig.from_file(config_path)
    if not os.path.exists(config.metrics_path):
        print(f"No metrics found at {config.metrics_path}.")
        print("Run the 'evaluate' stage first.")
        return

    with open(config.metrics_path, 'r', encoding='utf-8') as f:
        report = json.load(f)
    print(format_summary(report))
    if report.get('flags'):
        print(f"⚠️ Flags: {', '.join(report['flags'])}")

    train_report_path = os.path.join(config.stage_dir('train'), 'train_report.json')
    if os.path.exists(train_report_path):
        with open(train_report_path, 'r', encoding='utf-8') as f:
            training = json.load(f)
        print()
        print(f"📈 Training (best epoch {training['best_epoch']}, stopped at {training['stopped_epoch']}"
              f"{', early stop' if training['early_stopped'] else ''})")
        for epoch in training['epochs'][-last_epochs:]:
            print(f"   {epoch['epoch']:3d}: loss={epoch['train_loss']:.4f} acc={epoch['train_accuracy']:.3f} "
                  f"val_loss={epoch['val_loss']:.4f} val_acc={epoch['val_accuracy']:.3f}")

    if report.get('config_hash') != config.config_hash:
        print()
        print("💡 The config file changed since these metrics were produced.")


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='View pipeline metrics')
    parser.add_argument('--config', default='pipeline.json', help='Pipeline config (default: pipeline.json)')
    parser.add_argument('--epochs', type=int, default=10, help='Epochs of history to show (default: 10)')
    args = parser.parse_args()
    view_metrics(args.config, args.epochs)
