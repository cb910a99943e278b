/**
 * Minimal DOM construction helpers — the entire UI is hand-rolled elements,
 * so a tiny hyperscript wrapper keeps the view code readable.
 */

export interface ElProps {
  id?: string;
  className?: string;
  text?: string;
  title?: string;
  href?: string;
  type?: string;
  value?: string;
  name?: string;
  htmlFor?: string;
  placeholder?: string;
  disabled?: boolean;
  checked?: boolean;
  download?: string;
  dataset?: Record<string, string>;
  onClick?: (event: MouseEvent) => void;
  onChange?: (event: Event) => void;
  onInput?: (event: Event) => void;
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  props: ElProps = {},
  children: Array<HTMLElement | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (props.id !== undefined) node.id = props.id;
  if (props.className !== undefined) node.className = props.className;
  if (props.text !== undefined) node.textContent = props.text;
  if (props.title !== undefined) node.title = props.title;
  if (props.href !== undefined) (node as unknown as HTMLAnchorElement).href = props.href;
  if (props.type !== undefined) (node as unknown as HTMLInputElement).type = props.type;
  if (props.value !== undefined) (node as unknown as HTMLInputElement).value = props.value;
  if (props.name !== undefined) (node as unknown as HTMLInputElement).name = props.name;
  if (props.htmlFor !== undefined) (node as unknown as HTMLLabelElement).htmlFor = props.htmlFor;
  if (props.placeholder !== undefined) {
    (node as unknown as HTMLInputElement).placeholder = props.placeholder;
  }
  if (props.disabled !== undefined) {
    (node as unknown as HTMLButtonElement).disabled = props.disabled;
  }
  if (props.checked !== undefined) {
    (node as unknown as HTMLInputElement).checked = props.checked;
  }
  if (props.download !== undefined) {
    (node as unknown as HTMLAnchorElement).download = props.download;
  }
  if (props.dataset) {
    for (const [key, value] of Object.entries(props.dataset)) {
      node.dataset[key] = value;
    }
  }
  if (props.onClick) node.addEventListener("click", props.onClick as EventListener);
  if (props.onChange) node.addEventListener("change", props.onChange);
  if (props.onInput) node.addEventListener("input", props.onInput);
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) {
    node.removeChild(node.firstChild);
  }
}
