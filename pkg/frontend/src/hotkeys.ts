// Keyboard selection: digits 1-9 pick an answer option, Enter advances the
// iteration when the queue is drained.

export type HotkeyHandler = (optionIndex: number) => void;

export function bindHotkeys(
  target: { addEventListener: (type: string, fn: (e: KeyboardEvent) => void) => void },
  onOption: HotkeyHandler,
  onAdvance: () => void,
): void {
  target.addEventListener("keydown", (event: KeyboardEvent) => {
    if (event.key >= "1" && event.key <= "9") {
      event.preventDefault();
      onOption(Number(event.key) - 1);
    } else if (event.key === "Enter") {
      event.preventDefault();
      onAdvance();
    }
  });
}
